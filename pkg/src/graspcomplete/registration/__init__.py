from .icp import IcpConfig, IcpResult, IcpRegistration, icp_align, kabsch, write_rmse_csv

__all__ = ["IcpConfig", "IcpRegistration", "IcpResult", "icp_align", "kabsch", "write_rmse_csv"]
