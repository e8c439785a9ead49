from pydantic_settings import BaseSettings, SettingsConfigDict
from pydantic import Field


class Settings(BaseSettings):
    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )

    log_level: str = Field("INFO", alias="LOG_LEVEL")
    log_dir: str = Field("data/logs", alias="LOG_DIR")
    # "console" for humans, "json" for log shippers
    log_format: str = Field("console", alias="LOG_FORMAT")

    runs_dir: str = Field("data/runs", alias="APT_RUNS_DIR")
    # Exported to OpenBLAS/MKL before numpy loads; >1 breaks bitwise reproducibility.
    blas_threads: int = Field(1, alias="APT_BLAS_THREADS")
    run_slow_tests: bool = Field(False, alias="APT_RUN_SLOW")
    # worker processes for benchmark runs; 0 = one per CPU
    bench_workers: int = Field(0, alias="APT_BENCH_WORKERS")


settings = Settings()
