from pydantic_settings import BaseSettings
from typing import Optional
import os
from dotenv import load_dotenv

load_dotenv()

class Settings(BaseSettings):
    """Harness settings"""
    model_config = {'extra': 'ignore', 'env_file': '.env', 'case_sensitive': False}

    # Basic app settings
    app_name: str = "Smart Grid Storage Bench"
    app_version: str = "1.0.0"
    log_level: str = os.getenv("LOG_LEVEL", "INFO")

    # Where stores, layouts and reports go unless a run config says otherwise
    data_dir: str = os.getenv("DATA_DIR", "./benchdata")

    # Actor runtime
    actor_pool_size: int = os.cpu_count() or 4
    collect_timeout_seconds: float = 60.0
    serialize_payloads: bool = False

    # Billing
    mcb_block_households: int = 256

    # Bench
    default_repetitions: int = 5

    # SQLite
    sqlite_busy_timeout_seconds: float = 30.0
    sqlite_echo: bool = False

    # Optional override of the A1 store location
    a1_database_url: Optional[str] = os.getenv("A1_DATABASE_URL")


settings = Settings()
