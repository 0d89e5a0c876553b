import sys
from pathlib import Path

# make tests/ importable for shared oracles (rlp_oracle, helpers)
sys.path.insert(0, str(Path(__file__).parent))
