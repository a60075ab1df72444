from dotenv import load_dotenv
import os

load_dotenv()
DEFAULT_WORKERS = max(1, int(os.getenv("HISTOAD_WORKERS", os.cpu_count() or 1)))
LOG_LEVEL = os.getenv("HISTOAD_LOG_LEVEL", "INFO").upper()
DEFAULT_OUTPUT_DIR = os.getenv("HISTOAD_OUTPUT_DIR", "runs")

CONFIG_ECHO_NAME = "effective_config.env"
