# Core module for conic Ricci flow lab
