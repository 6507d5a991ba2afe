"""GP-TimeSet synthesis and the TimeFlex forecasting laboratory."""
__version__ = "0.1.0"
