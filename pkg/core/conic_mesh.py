"""
錐面三角網格

背景網格以分段平坦的邊長 l⁰ 表示，標記頂點的角度和等於 2πβ_j。
預設網格: 虧格 0 為細分正二十面體，虧格 1 為單位面積的方格環面，
虧格 2 為以雙曲正八邊形 (內角 π/4) 的測地邊長建構並黏合的八邊形。
"""
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import brentq
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import shortest_path

from config import MESH_DEFAULTS, MESH_HEADER
from .cone_geometry import ConicSurfaceSpec
from .exceptions import (
    ConfigParseError,
    MeshConstructionError,
    ParameterRangeError,
    SnapshotVersionError,
)
from .utils import format_float
from .logging_config import get_logger

logger = get_logger(__name__)


@dataclass(frozen=True, eq=False)
class ConicMesh:
    """
    錐面背景網格

    Attributes:
    -----------
    n_vertices : int
    faces : np.ndarray
        (F, 3) 逆時針頂點索引
    edges : np.ndarray
        (E, 2) 排序後的無向邊
    lengths : np.ndarray
        (E,) 背景邊長 l⁰
    face_edges : np.ndarray
        (F, 3) 每個角對邊的邊索引
    cone_vertices : tuple of int
        標記頂點
    cone_betas : tuple of float
        標記頂點的錐角參數
    coordinates : np.ndarray, optional
        (V, 3) 嵌入座標，僅供參考
    """
    n_vertices: int
    faces: np.ndarray
    edges: np.ndarray
    lengths: np.ndarray
    face_edges: np.ndarray
    cone_vertices: Tuple[int, ...] = ()
    cone_betas: Tuple[float, ...] = ()
    coordinates: Optional[np.ndarray] = None

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def euler_characteristic(self) -> int:
        return self.n_vertices - self.n_edges + self.n_faces

    @property
    def genus(self) -> int:
        return (2 - self.euler_characteristic) // 2

    @property
    def vertex_betas(self) -> np.ndarray:
        """每個頂點的目標 β (未標記為 1)"""
        return targets_array(self, self.cone_betas)

    def with_cones(self, vertices: Sequence[int], betas: Sequence[float]) -> 'ConicMesh':
        return replace(self, cone_vertices=tuple(int(v) for v in vertices),
                       cone_betas=tuple(float(b) for b in betas))

    def relabel(self, permutation: Sequence[int]) -> 'ConicMesh':
        """
        頂點重新編號 (舊頂點 i 變為 permutation[i])，面的順序不變

        每個頂點的累加順序仍依面順序，因此所有逐頂點運算逐位元一致。
        """
        perm = np.asarray(permutation, dtype=np.int64)
        faces = perm[self.faces]
        corner_lengths = self.lengths[self.face_edges]
        coords = None
        if self.coordinates is not None:
            coords = np.empty_like(self.coordinates)
            coords[perm] = self.coordinates
        return mesh_from_corner_lengths(
            self.n_vertices, faces, corner_lengths,
            cone_vertices=[int(perm[v]) for v in self.cone_vertices],
            cone_betas=self.cone_betas, coordinates=coords,
        )


def targets_array(mesh: ConicMesh, betas: Sequence[float]) -> np.ndarray:
    targets = np.ones(mesh.n_vertices)
    if len(betas):
        targets[list(mesh.cone_vertices)] = betas
    return targets


def mesh_from_corner_lengths(n_vertices: int, faces, corner_lengths,
                             cone_vertices: Sequence[int] = (), cone_betas: Sequence[float] = (),
                             coordinates=None) -> ConicMesh:
    """
    由面與每個角對邊的長度建立網格

    Raises:
    -------
    MeshConstructionError
        非閉合流形、兩側邊長不一致或違反三角不等式
    """
    faces = np.asarray(faces, dtype=np.int64)
    corner_lengths = np.asarray(corner_lengths, dtype=float)
    opposite = np.stack([faces[:, [1, 2]], faces[:, [2, 0]], faces[:, [0, 1]]], axis=1)
    pairs = np.sort(opposite.reshape(-1, 2), axis=1)
    edges, inverse = np.unique(pairs, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)

    counts = np.bincount(inverse, minlength=len(edges))
    if np.any(counts != 2):
        bad = edges[int(np.flatnonzero(counts != 2)[0])]
        raise MeshConstructionError(f'邊 {tuple(bad)} 屬於 {counts[counts != 2][0]} 個面，不是閉合流形')
    if np.any(edges[:, 0] == edges[:, 1]):
        raise MeshConstructionError('存在退化邊')
    used = np.unique(faces)
    if len(used) != n_vertices:
        raise MeshConstructionError(f'有 {n_vertices - len(used)} 個頂點不屬於任何面')

    flat = corner_lengths.reshape(-1)
    lengths = np.full(len(edges), np.nan)
    order = np.argsort(inverse, kind='stable')
    first = order[::2]
    second = order[1::2]
    lengths[inverse[first]] = flat[first]
    if not np.allclose(flat[first], flat[second], rtol=1e-9, atol=0.0):
        raise MeshConstructionError('同一條邊在兩側三角形的長度不一致')

    face_edges = inverse.reshape(-1, 3)
    mesh = ConicMesh(
        n_vertices=int(n_vertices), faces=faces, edges=edges, lengths=lengths,
        face_edges=face_edges, cone_vertices=tuple(int(v) for v in cone_vertices),
        cone_betas=tuple(float(b) for b in cone_betas),
        coordinates=None if coordinates is None else np.asarray(coordinates, dtype=float),
    )
    bad = triangle_violations(mesh.lengths[mesh.face_edges])
    if bad.size:
        raise MeshConstructionError('背景邊長違反三角不等式', vertex=int(mesh.faces[bad[0], 0]))
    return mesh


# ============== 三角形幾何 ==============

def triangle_violations(corner_lengths: np.ndarray) -> np.ndarray:
    """違反嚴格三角不等式的面索引"""
    a, b, c = corner_lengths[:, 0], corner_lengths[:, 1], corner_lengths[:, 2]
    bad = (a >= b + c) | (b >= c + a) | (c >= a + b) | ~np.isfinite(a + b + c)
    return np.flatnonzero(bad)


def corner_angles(corner_lengths: np.ndarray) -> np.ndarray:
    """
    半角公式計算三角形內角 (每角對應對邊長)

    tan(θ_a/2) = sqrt((s-b)(s-c) / (s(s-a)))，在銳角與鈍角附近皆穩定。
    """
    a, b, c = corner_lengths[:, 0], corner_lengths[:, 1], corner_lengths[:, 2]
    s = 0.5 * (a + b + c)
    sa, sb, sc = s - a, s - b, s - c
    angles = np.empty_like(corner_lengths)
    angles[:, 0] = 2.0 * np.arctan2(np.sqrt(sb * sc), np.sqrt(s * sa))
    angles[:, 1] = 2.0 * np.arctan2(np.sqrt(sc * sa), np.sqrt(s * sb))
    angles[:, 2] = 2.0 * np.arctan2(np.sqrt(sa * sb), np.sqrt(s * sc))
    return angles


def triangle_areas(corner_lengths: np.ndarray) -> np.ndarray:
    """Heron 公式 (排序後的數值穩定形式)"""
    ordered = -np.sort(-corner_lengths, axis=1)
    a, b, c = ordered[:, 0], ordered[:, 1], ordered[:, 2]
    product = (a + (b + c)) * (c - (a - b)) * (c + (a - b)) * (a + (b - c))
    return 0.25 * np.sqrt(np.maximum(product, 0.0))


def angle_sums(mesh: ConicMesh, angles: np.ndarray) -> np.ndarray:
    totals = np.zeros(mesh.n_vertices)
    np.add.at(totals, mesh.faces, angles)
    return totals


def conformal_vertex_areas(mesh: ConicMesh, corner_lengths: np.ndarray,
                           angles: np.ndarray) -> np.ndarray:
    """
    共形頂點面積 A_i = ½ ∂A/∂φ_i

    每個三角形在角 c 分得 Σ_{k≠c} l_k² cot θ_k / 8，三角分量的和等於三角形面積。
    非 Delaunay 網格上可能為負值。
    """
    terms = corner_lengths ** 2 / np.tan(angles) / 8.0
    shares = terms.sum(axis=1)[:, None] - terms
    areas = np.zeros(mesh.n_vertices)
    np.add.at(areas, mesh.faces, shares)
    return areas


def cotangent_weights(mesh: ConicMesh, angles: np.ndarray) -> np.ndarray:
    """邊權 w_ij = (cot α + cot β)/2"""
    weights = np.zeros(mesh.n_edges)
    np.add.at(weights, mesh.face_edges, 0.5 / np.tan(angles))
    return weights


def background_angle_sums(mesh: ConicMesh) -> np.ndarray:
    return angle_sums(mesh, corner_angles(mesh.lengths[mesh.face_edges]))


def edge_graph(mesh: ConicMesh, weights: np.ndarray = None):
    """對稱稀疏鄰接矩陣 (預設權重為背景邊長)"""
    weights = mesh.lengths if weights is None else weights
    i, j = mesh.edges[:, 0], mesh.edges[:, 1]
    n = mesh.n_vertices
    return coo_matrix((np.concatenate([weights, weights]),
                       (np.concatenate([i, j]), np.concatenate([j, i]))), shape=(n, n)).tocsr()


# ============== 預設網格 ==============

def _icosahedron() -> Tuple[np.ndarray, np.ndarray]:
    golden = (1.0 + math.sqrt(5.0)) / 2.0
    vertices = np.array([
        [-1, golden, 0], [1, golden, 0], [-1, -golden, 0], [1, -golden, 0],
        [0, -1, golden], [0, 1, golden], [0, -1, -golden], [0, 1, -golden],
        [golden, 0, -1], [golden, 0, 1], [-golden, 0, -1], [-golden, 0, 1],
    ], dtype=float)
    vertices /= np.linalg.norm(vertices, axis=1)[:, None]
    faces = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ], dtype=np.int64)
    return vertices, faces


def _subdivide_sphere(vertices: np.ndarray, faces: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    points = [tuple(v) for v in vertices]
    midpoint: Dict[Tuple[int, int], int] = {}

    def middle(i: int, j: int) -> int:
        key = (min(i, j), max(i, j))
        if key not in midpoint:
            p = (np.array(points[i]) + np.array(points[j])) / 2.0
            points.append(tuple(p / np.linalg.norm(p)))
            midpoint[key] = len(points) - 1
        return midpoint[key]

    refined = []
    for a, b, c in faces:
        ab, bc, ca = middle(a, b), middle(b, c), middle(c, a)
        refined.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]])
    return np.array(points), np.array(refined, dtype=np.int64)


def _chord_corner_lengths(coords: np.ndarray, faces: np.ndarray) -> np.ndarray:
    p = coords[faces]
    return np.stack([
        np.linalg.norm(p[:, 1] - p[:, 2], axis=1),
        np.linalg.norm(p[:, 2] - p[:, 0], axis=1),
        np.linalg.norm(p[:, 0] - p[:, 1], axis=1),
    ], axis=1)


def icosphere_mesh(resolution: int) -> ConicMesh:
    """細分正二十面體，原始 12 個頂點的索引為 0..11"""
    vertices, faces = _icosahedron()
    for _ in range(resolution):
        vertices, faces = _subdivide_sphere(vertices, faces)
    return mesh_from_corner_lengths(len(vertices), faces, _chord_corner_lengths(vertices, faces),
                                    coordinates=vertices)


def flat_torus_mesh(cells: int) -> ConicMesh:
    """單位面積方格環面，每格兩個三角形"""
    if cells < 3:
        raise MeshConstructionError(f'環面格數 {cells} 過少 (至少 3)')
    n = cells
    h = 1.0 / n
    faces = []
    corner = []
    for j in range(n):
        for i in range(n):
            v00 = i + n * j
            v10 = (i + 1) % n + n * j
            v01 = i + n * ((j + 1) % n)
            v11 = (i + 1) % n + n * ((j + 1) % n)
            faces.append([v00, v10, v11])
            corner.append([h, h * math.sqrt(2.0), h])
            faces.append([v00, v11, v01])
            corner.append([h, h, h * math.sqrt(2.0)])
    grid = np.array([[(v % n) * h, (v // n) * h, 0.0] for v in range(n * n)])
    return mesh_from_corner_lengths(n * n, faces, corner, coordinates=grid)


def _poincare(points: np.ndarray) -> np.ndarray:
    norm2 = np.sum(points ** 2, axis=-1, keepdims=True)
    return points / (1.0 + np.sqrt(1.0 - norm2))


def _hyperbolic_distance(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Klein 模型座標間的雙曲距離 (經 Poincaré 模型計算以保持小距離精度)"""
    pp, qq = _poincare(p), _poincare(q)
    num = np.linalg.norm(pp - qq, axis=-1)
    den = np.sqrt((1.0 - np.sum(pp ** 2, axis=-1)) * (1.0 - np.sum(qq ** 2, axis=-1)))
    return 2.0 * np.arcsinh(num / den)


# 八邊形邊的配對 a b a⁻¹ b⁻¹ c d c⁻¹ d⁻¹
OCTAGON_PAIRING = {0: 2, 2: 0, 1: 3, 3: 1, 4: 6, 6: 4, 5: 7, 7: 5}


def octagon_mesh(subdivision: int) -> ConicMesh:
    """
    虧格 2 曲面: 雙曲正八邊形的 8 個扇形各細分為 subdivision² 個三角形

    邊長為 Klein 模型中頂點間的雙曲距離，角點黏合後的總角度接近 2π。
    """
    n = subdivision
    if n < 3:
        raise MeshConstructionError(f'八邊形細分 {n} 過少 (至少 3)')
    cot = 1.0 / math.tan(math.pi / 8.0)
    klein_radius = math.tanh(math.acosh(cot * cot))
    corners = np.array([
        [klein_radius * math.cos(2 * math.pi * s / 8 + math.pi / 8),
         klein_radius * math.sin(2 * math.pi * s / 8 + math.pi / 8)] for s in range(8)
    ])

    ids: Dict[tuple, int] = {}
    positions: List[np.ndarray] = []

    def key(s: int, a: int, b: int) -> tuple:
        if a == 0 and b == 0:
            return ('O',)
        if a + b == n:
            m = b
            if m == 0 or m == n:
                return ('K',)
            partner = OCTAGON_PAIRING[s]
            return ('S', s, m) if s < partner else ('S', partner, n - m)
        if b == 0:
            return ('R', s, a)
        if a == 0:
            return ('R', (s + 1) % 8, b)
        return ('I', s, a, b)

    def vertex(s: int, a: int, b: int) -> Tuple[int, np.ndarray]:
        point = (a * corners[s] + b * corners[(s + 1) % 8]) / n
        k = key(s, a, b)
        if k not in ids:
            ids[k] = len(positions)
            positions.append(point)
        return ids[k], point

    faces = []
    corner_lengths = []
    for s in range(8):
        for a in range(n):
            for b in range(n - a):
                triangles = [((a, b), (a + 1, b), (a, b + 1))]
                if a + b <= n - 2:
                    triangles.append(((a + 1, b), (a + 1, b + 1), (a, b + 1)))
                for tri in triangles:
                    verts = [vertex(s, *ab) for ab in tri]
                    pts = np.array([p for _, p in verts])
                    faces.append([v for v, _ in verts])
                    corner_lengths.append([
                        _hyperbolic_distance(pts[1], pts[2]),
                        _hyperbolic_distance(pts[2], pts[0]),
                        _hyperbolic_distance(pts[0], pts[1]),
                    ])

    coords = np.zeros((len(positions), 3))
    coords[:, :2] = np.array(positions)
    return mesh_from_corner_lengths(len(positions), faces, corner_lengths, coordinates=coords)


def _choose_cone_vertices(mesh: ConicMesh, spec: ConicSurfaceSpec, candidates: np.ndarray) -> List[int]:
    """依 spec.positions 或貪婪地取兩兩距離最遠且互不相鄰的頂點"""
    chosen: List[int] = []
    hops = None
    if spec.genus != 0:
        hops = shortest_path(edge_graph(mesh, np.ones(mesh.n_edges)), unweighted=True)

    for position in spec.positions:
        if position is None:
            continue
        if isinstance(position, (int, np.integer)):
            chosen.append(int(position))
        elif mesh.coordinates is not None:
            target = np.asarray(position, dtype=float)
            chosen.append(int(np.argmin(np.linalg.norm(mesh.coordinates[:, :len(target)] - target, axis=1))))
        else:
            raise MeshConstructionError('此網格沒有座標，無法以座標指定錐點')

    for _ in range(spec.k - len(chosen)):
        pool = [int(v) for v in candidates if int(v) not in chosen]
        if not pool:
            raise MeshConstructionError(f'候選頂點不足以放置 {spec.k} 個錐點')
        if not chosen:
            chosen.append(pool[0])
            continue
        if spec.genus == 0:
            coords = mesh.coordinates
            score = [min(np.linalg.norm(coords[v] - coords[c]) for c in chosen) for v in pool]
        else:
            score = [min(hops[c, v] for c in chosen) for v in pool]
        chosen.append(pool[int(np.argmax(score))])

    if len(set(chosen)) != len(chosen):
        raise MeshConstructionError('錐點位置重複')
    for c in chosen:
        neighbors = mesh.edges[(mesh.edges == c).any(axis=1)].ravel()
        clash = set(neighbors.tolist()) & (set(chosen) - {c})
        if clash:
            raise MeshConstructionError(f'錐點 {c} 與 {sorted(clash)} 相鄰，解析度不足', vertex=c)
    return chosen


def _apply_grading(mesh: ConicMesh, vertices: Sequence[int], rings: int, rate: float) -> ConicMesh:
    """錐點附近的共形縮放: 第 d 環的頂點因子為 exp(-rate·(rings + 1 - d))"""
    if rings <= 0 or not vertices:
        return mesh
    hops = shortest_path(edge_graph(mesh, np.ones(mesh.n_edges)), unweighted=True, indices=list(vertices))
    distance = np.min(np.atleast_2d(hops), axis=0)
    factor = -rate * np.maximum(0.0, rings + 1 - distance)
    scale = np.exp(0.5 * (factor[mesh.edges[:, 0]] + factor[mesh.edges[:, 1]]))
    return replace(mesh, lengths=mesh.lengths * scale)


def _realize_cone_angle(mesh: ConicMesh, vertex: int, beta: float) -> np.ndarray:
    """
    以單一縮放因子 λ 伸縮所有以 vertex 為端點的邊，使其角度和為 2πβ

    角度和隨 λ 嚴格遞減，以 brentq 求根。
    """
    face_idx, corner_idx = np.nonzero(mesh.faces == vertex)
    opposite = mesh.lengths[mesh.face_edges[face_idx, corner_idx]]
    spoke_b = mesh.lengths[mesh.face_edges[face_idx, (corner_idx + 1) % 3]]
    spoke_c = mesh.lengths[mesh.face_edges[face_idx, (corner_idx + 2) % 3]]
    target = 2.0 * math.pi * beta

    def total_angle(lam: float) -> float:
        b, c = lam * spoke_b, lam * spoke_c
        s = 0.5 * (opposite + b + c)
        return float(np.sum(2.0 * np.arctan2(np.sqrt(np.maximum((s - b) * (s - c), 0.0)),
                                             np.sqrt(np.maximum(s * (s - opposite), 0.0)))))

    low = float(np.max(opposite / (spoke_b + spoke_c))) * (1.0 + 1e-9)
    if total_angle(low) <= target:
        raise MeshConstructionError(f'角度 2π·{beta} 無法以伸縮實現', vertex=vertex)
    high = max(1.0, 2.0 * low)
    while total_angle(high) > target:
        high *= 2.0
        if high > 1e12:
            raise MeshConstructionError(f'角度 2π·{beta} 過小', vertex=vertex)
    lam = brentq(lambda x: total_angle(x) - target, low, high, xtol=1e-15, rtol=1e-15)

    spokes = (mesh.edges == vertex).any(axis=1)
    lengths = mesh.lengths.copy()
    lengths[spokes] *= lam
    return lengths


def build_preset_mesh(spec: ConicSurfaceSpec, resolution: int = None,
                      grading_rings: int = None, grading_rate: float = None) -> ConicMesh:
    """
    建立實現錐面資料的預設背景網格

    Parameters:
    -----------
    spec : ConicSurfaceSpec
        虧格 0, 1, 2
    resolution : int
        虧格 0: 細分次數；虧格 1: 3·2^resolution 格；虧格 2: 扇形細分 resolution + 2
    grading_rings : int
        錐點附近共形縮放的環數 (0 為不分級)

    Raises:
    -------
    MeshConstructionError
        不支援的虧格、錐點過多或角度無法實現
    """
    resolution = MESH_DEFAULTS['resolution'] if resolution is None else resolution
    grading_rings = MESH_DEFAULTS['grading_rings'] if grading_rings is None else grading_rings
    grading_rate = MESH_DEFAULTS['grading_rate'] if grading_rate is None else grading_rate
    if resolution < 0:
        raise ParameterRangeError('resolution', resolution, min_val=0)

    if spec.genus == 0:
        mesh = icosphere_mesh(resolution)
        candidates = np.arange(12)
        if spec.k > 0 and resolution == 0:
            raise MeshConstructionError('解析度 0 的二十面體上錐點互相相鄰')
    elif spec.genus == 1:
        mesh = flat_torus_mesh(3 * 2 ** resolution)
        candidates = np.arange(mesh.n_vertices)
    elif spec.genus == 2:
        mesh = octagon_mesh(resolution + 2)
        corner = _octagon_corner(mesh)
        candidates = np.array([v for v in range(mesh.n_vertices) if v != corner], dtype=np.int64)
    else:
        raise MeshConstructionError(f'不支援虧格 {spec.genus} 的預設網格')

    if spec.k == 0:
        logger.info(f'背景網格: 虧格 {spec.genus} V={mesh.n_vertices} F={mesh.n_faces}')
        return mesh

    vertices = _choose_cone_vertices(mesh, spec, candidates)
    mesh = _apply_grading(mesh, vertices, grading_rings, grading_rate)
    for vertex, beta in zip(vertices, spec.betas):
        mesh = replace(mesh, lengths=_realize_cone_angle(mesh, vertex, beta))

    bad = triangle_violations(mesh.lengths[mesh.face_edges])
    if bad.size:
        raise MeshConstructionError('實現錐角後三角不等式不成立', vertex=int(mesh.faces[bad[0], 0]))
    logger.info(f'背景網格: 虧格 {spec.genus} V={mesh.n_vertices} F={mesh.n_faces} '
                f'錐點 {dict(zip(vertices, spec.betas))}')
    return mesh.with_cones(vertices, spec.betas)


def _octagon_corner(mesh: ConicMesh) -> int:
    """八邊形黏合後的角點 (度數最高的頂點)"""
    degree = np.bincount(mesh.edges.ravel(), minlength=mesh.n_vertices)
    return int(np.argmax(degree))


# ============== 網格檔案 ==============

def mesh_to_lines(mesh: ConicMesh) -> List[str]:
    """CONICMESH v1 文字格式"""
    lines = [MESH_HEADER, f'V {mesh.n_vertices} F {mesh.n_faces} K {len(mesh.cone_vertices)}']
    for v in range(mesh.n_vertices):
        if mesh.coordinates is not None:
            lines.append(f'v {v} ' + ' '.join(format_float(x) for x in mesh.coordinates[v]))
        else:
            lines.append(f'v {v}')
    for vertex, beta in zip(mesh.cone_vertices, mesh.cone_betas):
        lines.append(f'c {vertex} {format_float(beta)}')
    for a, b, c in mesh.faces:
        lines.append(f'f {a} {b} {c}')
    for (a, b), length in zip(mesh.edges, mesh.lengths):
        lines.append(f'l {a} {b} {format_float(length)}')
    return lines


def mesh_from_lines(lines: Sequence[str], first_line_no: int = 1) -> ConicMesh:
    """
    解析 CONICMESH v1 文字

    Raises:
    -------
    SnapshotVersionError
        標頭版本不符
    ConfigParseError
        語法錯誤 (附行號)
    """
    lines = [line.rstrip('\n') for line in lines]
    if not lines or lines[0].strip() != MESH_HEADER:
        raise SnapshotVersionError(lines[0].strip() if lines else '', MESH_HEADER)

    def fail(offset: int, reason: str):
        raise ConfigParseError(first_line_no + offset, lines[offset], reason)

    counts = lines[1].split() if len(lines) > 1 else []
    if len(counts) != 6 or counts[0] != 'V' or counts[2] != 'F' or counts[4] != 'K':
        fail(min(1, len(lines) - 1), '第二行必須為 V <nv> F <nf> K <nk>')
    try:
        n_vertices, n_faces, n_cones = int(counts[1]), int(counts[3]), int(counts[5])
    except ValueError:
        fail(1, '頂點、面與錐點數必須為整數')

    coords: Dict[int, List[float]] = {}
    cones: List[Tuple[int, float]] = []
    faces: List[List[int]] = []
    edge_lengths: Dict[Tuple[int, int], float] = {}
    for offset, line in enumerate(lines[2:], start=2):
        parts = line.split()
        if not parts:
            continue
        try:
            tag = parts[0]
            if tag == 'v':
                coords[int(parts[1])] = [float(x) for x in parts[2:]]
            elif tag == 'c':
                cones.append((int(parts[1]), float(parts[2])))
            elif tag == 'f':
                faces.append([int(p) for p in parts[1:4]])
            elif tag == 'l':
                a, b = sorted((int(parts[1]), int(parts[2])))
                if (a, b) in edge_lengths:
                    fail(offset, f'邊 ({a}, {b}) 重複')
                edge_lengths[(a, b)] = float(parts[3])
            else:
                fail(offset, f'未知的行類型 {tag!r}')
        except (IndexError, ValueError):
            fail(offset, '欄位數或數值格式錯誤')

    if len(coords) != n_vertices or len(faces) != n_faces or len(cones) != n_cones:
        raise ConfigParseError(first_line_no + 1, lines[1], '實際數量與宣告不符')

    faces_arr = np.array(faces, dtype=np.int64)
    corner = np.empty(faces_arr.shape)
    for f, (a, b, c) in enumerate(faces_arr):
        for k, (p, q) in enumerate(((b, c), (c, a), (a, b))):
            pair = (min(p, q), max(p, q))
            if pair not in edge_lengths:
                raise ConfigParseError(first_line_no, lines[0], f'缺少邊 {pair} 的長度')
            corner[f, k] = edge_lengths[pair]

    has_coords = all(len(c) == 3 for c in coords.values())
    coordinates = np.array([coords[v] for v in range(n_vertices)]) if has_coords else None
    return mesh_from_corner_lengths(
        n_vertices, faces_arr, corner,
        cone_vertices=[v for v, _ in cones], cone_betas=[b for _, b in cones],
        coordinates=coordinates,
    )


def write_mesh(mesh: ConicMesh, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text('\n'.join(mesh_to_lines(mesh)) + '\n', encoding='utf-8')
    return path


def read_mesh(path: Union[str, Path]) -> ConicMesh:
    return mesh_from_lines(Path(path).read_text(encoding='utf-8').splitlines())
