#!/usr/bin/env python3
"""
CLI entry point for seqmem experiments.

Usage:
    # Closed-form LAES fit and its report
    python run_seqmem.py fit-laes --config configs/seq_mnist_desk.env

    # Train an LMN initialized from that LAES
    python run_seqmem.py train --config configs/seq_mnist_desk.env --init-from runs/seq_mnist_desk/laes.ckpt

    # Gradient propagation curve of a trained model
    python run_seqmem.py probe-grad --config configs/seq_mnist_desk.env --checkpoint runs/seq_mnist_desk/model.ckpt
"""

import os
import sys
from dotenv import load_dotenv

# Load environment variables (SEQMEM_DATA_DIR, LOG_LEVEL) from .env file
load_dotenv()

# Ensure project root is in path
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from core.cli.main import main


if __name__ == "__main__":
    sys.exit(main())
