import os
import sys

# Tests never touch the on-disk run store
os.environ["QNG_DATABASE_URL"] = "sqlite://"
os.environ.setdefault("QNG_THREADS", "4")

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))
