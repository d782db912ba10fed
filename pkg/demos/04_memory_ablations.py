"""
What the episodic memory buys, and how little of it is needed.

Three questions, answered on the same stream with 5-seed means:

1. What happens without replay? (the query always comes from the stream)
2. What happens without meta-test fine-tuning? (evaluate the meta-trained
   parameters directly)
3. How much accuracy survives when only 5% of offered examples are stored?
"""

import argparse

import numpy as np

from metareplay import LearnerConfig, ReplaySchedule, make_synthetic_suite
from metareplay.learners import run
from metareplay.model import Classifier, ModelConfig

SEEDS = range(5)


def mean_macro(model, suite, cfg):
    return np.mean([np.mean(run(model, suite, cfg, seed=s)[0]) for s in SEEDS])


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    args = parser.parse_args()

    suite = make_synthetic_suite("BALANCED", num_tasks=5, classes_per_task=2,
                                 examples_per_class=1000, input_dim=10,
                                 seed=7, test_per_class=250)
    schedule = ReplaySchedule(batch_size=16, support_size=5,
                              replay_interval=1920, replay_rate=0.01)
    model = Classifier(ModelConfig(input_dim=10, encoder_dims=(32,), num_classes=10))

    variants = {
        "full": {},
        "no replay": {"no_replay": True},
        "no meta-test finetune": {"no_meta_test_finetune": True},
        "p_write = 0.05": {"p_write": 0.05},
    }
    base = None
    for name, flags in variants.items():
        cfg = LearnerConfig("OML_ER", schedule, inner_lr=0.008, outer_lr=0.025, **flags)
        macro = mean_macro(model, suite, cfg)
        if base is None:
            base = macro
        print(f"{name:24s} macro accuracy {macro:.3f}  ({macro - base:+.3f} vs full)")

    cfg = LearnerConfig("OML_ER", schedule, inner_lr=0.008, outer_lr=0.025, p_write=0.05)
    _, _, memory, _, _ = run(model, suite, cfg, seed=0)
    print(f"\nwith p_write=0.05 the store holds {len(memory)} of "
          f"{memory.offers} offered examples; composition by task: "
          f"{dict(sorted(memory.composition().items()))}")


if __name__ == "__main__":
    main()
