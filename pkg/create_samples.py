"""
Sample input generator for manual CLI runs
Writes a chain dataset, a seeded synthetic instance and the Sachs literature
constraints (CSV form) into samples/
"""

import os

import numpy as np
import pandas as pd

from data_io import default_names, write_constraints_json, write_dataset, write_matrix_csv
from sachs import CONSTRAINTS_PATH, SACHS_VARIABLES, load_sachs_constraints
from synth import GroundTruth, SynthConfig, gen_scale_free_dag, sample_constraints, sample_data


def _chain_instance():
    """x1 -> x2 -> x3 with unit weights."""
    W = np.zeros((3, 3))
    W[0, 1] = 1.0
    W[1, 2] = 1.0
    return GroundTruth.from_weights(W)


def _sachs_constraint_frame():
    constraints, training = load_sachs_constraints(CONSTRAINTS_PATH)
    return pd.DataFrame([
        {
            "cause": SACHS_VARIABLES[c.cause],
            "target": SACHS_VARIABLES[c.target],
            "kind": "effect",
            "sign": "+" if c.delta > 0 else "-",
            "training": k in training,
        }
        for k, c in enumerate(constraints)
    ])


def create_samples(samples_dir="samples", seed=0):
    """Generate sample inputs; existing files are left untouched. Returns the paths written."""
    os.makedirs(samples_dir, exist_ok=True)
    written = []

    chain = _chain_instance()
    instance = gen_scale_free_dag(SynthConfig(d=10, n=100, seed=seed))
    instance_data = sample_data(instance, 100, seed=seed + 1)
    names = instance_data.names

    writers = {
        "chain.csv": lambda p: write_dataset(sample_data(chain, 1000, seed=seed), p),
        "chain_constraints.json": lambda p: write_constraints_json(
            sample_constraints(chain, 1, seed=seed), default_names(3), p
        ),
        "instance_data.csv": lambda p: write_dataset(instance_data, p),
        "instance_truth.csv": lambda p: write_matrix_csv(instance.W_true, names, p),
        "instance_constraints.json": lambda p: write_constraints_json(
            sample_constraints(instance, 4, seed=seed + 2), names, p
        ),
        "sachs_constraints.csv": lambda p: _sachs_constraint_frame().to_csv(p, index=False),
    }
    for filename, write in writers.items():
        filepath = os.path.join(samples_dir, filename)

        # Skip if already exists
        if os.path.exists(filepath):
            continue

        write(filepath)
        written.append(filepath)
        print(f"✓ Created {filepath}")
    return written


if __name__ == "__main__":
    create_samples()
    print("\nSample inputs created in samples/ folder")
