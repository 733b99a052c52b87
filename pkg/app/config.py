import os
from dotenv import load_dotenv

load_dotenv()


class Config:
    # Output
    OUTPUT_DIR = os.getenv("BHAM_OUTPUT_DIR", "output")
    LOG_LEVEL = os.getenv("BHAM_LOG_LEVEL", "INFO")

    # Smooth functions
    DEFAULT_K = int(os.getenv("BHAM_DEFAULT_K", "10"))
    CURVE_POINTS = int(os.getenv("BHAM_CURVE_POINTS", "100"))

    # EM solvers
    EPSILON = float(os.getenv("BHAM_EPSILON", "1e-5"))
    MAX_EM_ITER = int(os.getenv("BHAM_MAX_EM_ITER", "200"))
    MAX_CD_ITER = int(os.getenv("BHAM_MAX_CD_ITER", "1000"))
    CD_TOL = float(os.getenv("BHAM_CD_TOL", "1e-7"))

    # Scale grid
    S1 = float(os.getenv("BHAM_S1", "1.0"))
    S0_MIN = float(os.getenv("BHAM_S0_MIN", "0.001"))
    S0_MAX = float(os.getenv("BHAM_S0_MAX", "0.5"))
    S0_COUNT = int(os.getenv("BHAM_S0_COUNT", "20"))

    # Cross-validation
    FOLDS = int(os.getenv("BHAM_FOLDS", "10"))
    SIM_FOLDS = int(os.getenv("BHAM_SIM_FOLDS", "5"))
    SEED = int(os.getenv("BHAM_SEED", "2024"))
    N_JOBS = int(os.getenv("BHAM_N_JOBS", "4"))

    # Selection
    THRESHOLD = float(os.getenv("BHAM_THRESHOLD", "0.5"))

    # Saved model
    FORMAT_VERSION = "1"
