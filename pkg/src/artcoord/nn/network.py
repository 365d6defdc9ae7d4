"""Multi-tower network container.

A network is one or more towers (each a Sequential ending in a flattened
feature vector) whose outputs are concatenated and passed through a shared
head ending in a sigmoid.  A single-tower network is the one-tower special
case, so training and evaluation code handles both shapes uniformly: inputs
are always a list with one array per tower.
"""

from __future__ import annotations

import numpy as np

from .layers import ParallelConcat, Sequential


class MultiTowerNet:
    def __init__(self, towers: list[Sequential], head: Sequential):
        if not towers:
            raise ValueError("need at least one tower")
        self.towers = list(towers)
        self.head = head

    @property
    def n_towers(self) -> int:
        return len(self.towers)

    def forward(self, inputs: list[np.ndarray], train: bool = False, rng=None) -> np.ndarray:
        if len(inputs) != len(self.towers):
            raise ValueError(f"got {len(inputs)} inputs for {len(self.towers)} towers")
        feats = [t.forward(x, train=train, rng=rng) for t, x in zip(self.towers, inputs)]
        self._widths = [f.shape[1] for f in feats]
        joined = feats[0] if len(feats) == 1 else np.concatenate(feats, axis=1)
        return self.head.forward(joined, train=train, rng=rng)

    def backward(self, grad_out: np.ndarray) -> list[np.ndarray]:
        grad = self.head.backward(grad_out)
        grads_in = []
        offset = 0
        for tower, width in zip(self.towers, self._widths):
            grads_in.append(tower.backward(grad[:, offset : offset + width]))
            offset += width
        return grads_in

    def named_layers(self):
        for i, tower in enumerate(self.towers):
            yield from tower.named_layers(f"tower{i}/")
        yield from self.head.named_layers("head/")

    def named_params(self) -> dict[str, np.ndarray]:
        out = {}
        for path, layer in self.named_layers():
            for key, value in layer.params.items():
                out[f"{path}.{key}"] = value
        return out

    def named_grads(self) -> dict[str, np.ndarray]:
        out = {}
        for path, layer in self.named_layers():
            for key, value in layer.grads.items():
                out[f"{path}.{key}"] = value
        return out

    def named_state(self) -> dict[str, np.ndarray]:
        out = {}
        for path, layer in self.named_layers():
            for key, value in layer.state.items():
                out[f"{path}.{key}"] = value
        return out

    def num_params(self) -> int:
        return sum(int(p.size) for p in self.named_params().values())

    def reg_loss(self) -> float:
        return sum(t.reg_loss() for t in self.towers) + self.head.reg_loss()

    def snapshot(self) -> dict[str, np.ndarray]:
        """Copies of all parameters and buffers (for best-epoch restore)."""
        tensors = {**self.named_params(), **self.named_state()}
        return {k: v.copy() for k, v in tensors.items()}

    def restore(self, snapshot: dict[str, np.ndarray]) -> None:
        """Copy a snapshot's values back into the live tensors."""
        tensors = {**self.named_params(), **self.named_state()}
        missing = set(tensors) ^ set(snapshot)
        if missing:
            raise ValueError(f"snapshot does not match network tensors: {sorted(missing)}")
        for key, live in tensors.items():
            if live.shape != snapshot[key].shape:
                raise ValueError(
                    f"tensor {key!r} has shape {live.shape}, snapshot has {snapshot[key].shape}"
                )
            live[...] = snapshot[key]
