"""
系統設定檔
"""
from pathlib import Path

# 資料夾路徑
BASE_DIR = Path(__file__).parent
PRESET_DIR = BASE_DIR / 'data' / 'presets'
OUTPUT_DIR = BASE_DIR / 'runs'

# 錐面幾何設定
GEOMETRY_DEFAULTS = {
    'zero_tol': 1e-12,            # χ 視為 0 的容差
    'beta_equal_tol': 1e-12,      # 判斷兩錐角相等的容差
}

# 模型錐熱核設定
HEAT_KERNEL_DEFAULTS = {
    'max_angular_mode': 400,      # 角向模數上限 L
    'series_tolerance': 1e-12,    # 級數截斷相對容差
    'r_min_ratio': 1e-4,          # 最內層半徑 / 最外層半徑
    'fit_decades': 2.0,           # 展開擬合使用的內層十進位區間
    'min_fit_nodes': 8,           # 擬合區間最少節點數
    'noise_floor': 1e-12,         # 相對雜訊下限
}

# 旋轉對稱流設定
ROTATIONAL_DEFAULTS = {
    'tip_radius': 1e-4,           # 截斷處距錐點的半徑 (修正量約 r^2)
    'dx': 0.05,                   # 共形座標網格間距
    'scheme': 'semi_implicit',    # 'semi_implicit' 或 'rk4'
    'dt': 0.01,
    'dt_min': 1e-8,
    'max_dw': 0.5,                # 單步 w 最大變化，超過即拒絕
    'rk4_cfl': 0.4,
    'recenter': True,             # 整格平移保持剖面置中
    'recenter_cells': 2,          # 質心偏移超過幾格才平移
    'check_every': 10,            # 每幾步記錄一次診斷
    'converge_tol': 1e-6,         # ||R - ρ||∞ 收斂門檻
    'stationary_tol': 1e-5,       # 孤立子靜止判定 (弧長剖面變化率)
    'area_tol': 1e-3,             # 孤立子判定允許的相對面積漂移
}

# 孤立子打靶設定
SOLITON_DEFAULTS = {
    'rtol': 1e-12,
    'atol': 1e-14,
    'scan_points': 81,            # C 掃描點數
    'scan_scale': 5.0,            # 掃描範圍 [-scale*sqrt(ρ), scale*sqrt(ρ)]
    'n_samples': 801,             # 輸出弧長節點數
    'chebyshev_degree': 32,       # 殘差評估用 Chebyshev 次數
}

# 三角網格流設定
MESH_DEFAULTS = {
    'resolution': 2,              # 球面細分次數 / 環面格點數基準
    'grading_rings': 0,           # 錐點附近的共形縮放環數
    'grading_rate': 0.3,
    'dt': 0.01,
    'dt_min': 1e-8,               # 拒絕後減半的下限
    'cfl': 0.4,
    'max_dphi': 0.2,
    'phi_cap': 12.0,              # 爆破門檻 φ_max
    'gap': 1.0,                   # 集中判定的 φ 間隙
    'ball_fraction': 0.1,         # 監測球半徑 / 直徑
    'check_every': 20,
    'converge_tol': 1e-6,
}

# 診斷設定
DIAGNOSTIC_DEFAULTS = {
    'compat_tol': 1e-3,           # ∫(R-ρ)dA 相容性相對容差
    'interior_h_ratio': 1e-2,     # 內部節點: h >= ratio * max h
    'harnack_samples': 32,
    'rmin_tol_factor': 10.0,      # R_min 比較容差 = factor * dt
    'tail_fraction': 0.3,         # 收斂速率回歸使用的尾段比例
}

# 執行設定
RUN_DEFAULTS = {
    'seed': 42,
}

# 結束原因與程序結束碼
EXIT_CODES = {
    'converged': 0,
    'usage_error': 1,
    't_end': 2,
    'blowup_cap': 3,
    'step_failure': 4,
}

# 時間序列欄位 (固定順序)
TIMESERIES_COLUMNS = [
    't', 'area', 'rho', 'R_min', 'R_max', 'energy_F', 'entropy_N',
    'gb_residual', 'phi_min', 'phi_max', 'mu_norm', 'X_norm', 'grad_f_max',
]

# 檔案格式標頭
SNAPSHOT_HEADER = 'CONICRICCI-SNAPSHOT v1'
MESH_HEADER = 'CONICMESH v1'
