from pathlib import Path

SAMPLE_DATA_DIR = Path(__file__).parent / "test_data"
