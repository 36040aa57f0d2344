"""
Q Network
A small fully connected network in numpy: rectified hidden layers, linear
output, trained with plain SGD
"""

from typing import List, Optional, Sequence, Tuple

import numpy as np

from utils.exceptions import InvalidCallError


class QNetwork:
    """Multilayer perceptron mapping a flattened state to one value per joint action"""

    def __init__(self, layer_sizes: Sequence[int], rng: Optional[np.random.Generator] = None):
        if len(layer_sizes) < 2 or any(int(s) < 1 for s in layer_sizes):
            raise InvalidCallError(f"invalid layer sizes {list(layer_sizes)}")
        rng = rng if rng is not None else np.random.default_rng(0)

        self.layer_sizes: Tuple[int, ...] = tuple(int(s) for s in layer_sizes)
        self.weights: List[np.ndarray] = []
        self.biases: List[np.ndarray] = []
        for fan_in, fan_out in zip(self.layer_sizes[:-1], self.layer_sizes[1:]):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            self.weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            self.biases.append(np.zeros(fan_out))

    @classmethod
    def for_terminals(
        cls, num_terminals: int, hidden_sizes: Sequence[int], rng: Optional[np.random.Generator] = None
    ) -> "QNetwork":
        """Input 2M+1, output 2^M"""
        return cls([2 * num_terminals + 1, *hidden_sizes, 2 ** num_terminals], rng=rng)

    @property
    def num_actions(self) -> int:
        return self.layer_sizes[-1]

    def parameters(self) -> List[np.ndarray]:
        """W1, b1, W2, b2, ... in layer order"""
        params = []
        for w, b in zip(self.weights, self.biases):
            params.extend([w, b])
        return params

    def forward(self, x: np.ndarray) -> np.ndarray:
        out, _ = self.forward_with_cache(x)
        return out

    def forward_with_cache(self, x: np.ndarray) -> Tuple[np.ndarray, List[np.ndarray]]:
        """
        Returns:
            (output, activations) where activations[i] is the input of layer i
        """
        single = np.ndim(x) == 1
        h = np.atleast_2d(np.asarray(x, dtype=np.float64))
        activations = [h]
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            h = z if i == last else np.maximum(z, 0.0)
            if i != last:
                activations.append(h)
        return (h[0] if single else h), activations

    def backward(self, activations: List[np.ndarray], d_out: np.ndarray) -> List[Tuple[np.ndarray, np.ndarray]]:
        """Gradients (dW, db) per layer for the upstream gradient d_out"""
        grads: List[Tuple[np.ndarray, np.ndarray]] = [None] * len(self.weights)
        delta = np.atleast_2d(d_out)
        for i in range(len(self.weights) - 1, -1, -1):
            h_in = activations[i]
            grads[i] = (h_in.T @ delta, delta.sum(axis=0))
            if i > 0:
                delta = (delta @ self.weights[i].T) * (h_in > 0)
        return grads

    def apply_sgd(self, grads: List[Tuple[np.ndarray, np.ndarray]], learning_rate: float) -> None:
        for (dw, db), w, b in zip(grads, self.weights, self.biases):
            w -= learning_rate * dw
            b -= learning_rate * db

    def copy_from(self, other: "QNetwork") -> None:
        if other.layer_sizes != self.layer_sizes:
            raise InvalidCallError(f"architecture mismatch: {other.layer_sizes} vs {self.layer_sizes}")
        for dst, src in zip(self.parameters(), other.parameters()):
            np.copyto(dst, src)

    def clone(self) -> "QNetwork":
        twin = QNetwork(self.layer_sizes)
        twin.copy_from(self)
        return twin
