"""
錐面 Ricci 流實驗室測試套件
"""
