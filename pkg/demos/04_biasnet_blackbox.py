"""Recovering a hidden effect's phase response with an input-free network.

A random stable 7th-order all-pass cascade plays the role of an unknown
black-box effect.  A single "connected" BiasNet (learnable bias vector into
a sine-activated bottleneck, tanh outputs, bounded denormalization) is
trained so that its emitted cascade aligns the dry sweep with the effect's
output, then scored on held-out multitone material it never saw.

Runtime: several minutes on a laptop CPU.  Run with:
python demos/04_biasnet_blackbox.py
"""

import numpy as np

from apfalign import (apply, esr, generate_log_sweep, generate_multitone,
                      random_cascade)
from apfalign.train import TrainConfig, train

FS = 48000

# %% The hidden effect: never inspected by the model, only sampled
rng = np.random.default_rng(94)
hidden_effect, _ = random_cascade(
    rng, sample_rate=FS, r_range=(0.25, 0.55), fc_range=(300.0, 3000.0),
    a_range=(-0.25, 0.25), pole_range=(-0.5, 0.5))

dry = generate_log_sweep(20, 10000, 2.0, FS, amplitude=0.5)
wet = hidden_effect.process(dry)

# %% Held-out program material for honest evaluation
tones = [60 * 2 ** (k / 2.5) for k in range(17)]
held_dry = generate_multitone(tones, 1.5, FS, amplitude=0.5, seed=5)
held_wet = hidden_effect.process(held_dry)
ref = esr(held_dry.samples, held_wet.samples)
print(f"unaligned held-out ESR: {ref:.4f}")

# %% Train the connected model on the sweep pair
cfg = TrainConfig(learning_rate=3e-3, batch_size=512, max_epochs=100,
                  seed=1, loss="mse", model="connected", sample_rate=FS,
                  chunk_size=64, omega0=3.0, plateau_patience=500,
                  bounds={"fc": (200.0, 4000.0)})
print("training the connected BiasNet (this is the slow part)...")
result = train(dry, wet, cfg)
print(f"training loss {result.epoch_losses[0]:.5f} -> "
      f"{result.epoch_losses[-1]:.5f} over {len(result.epoch_losses)} epochs")

# %% Score on material the model never saw
aligned = apply(result.bundle, held_dry)
after = esr(aligned.samples, held_wet.samples)
print(f"aligned held-out ESR:   {after:.4f}  "
      f"({ref / after:.1f}x better than the unaligned reference)")

print("\nlearned sections:")
for section in result.bundle.sections:
    print(" ", section["params"])
