# *** imports

# ** core
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

# ** infra
import numpy as np
from tiferet.events import RaiseError


# *** constants

# ** constant: gelu_coefficient
GELU_COEFFICIENT = 0.044715

# ** constant: sqrt_two_over_pi
SQRT_TWO_OVER_PI = float(np.sqrt(2.0 / np.pi))


# *** helpers

# ** helper: unbroadcast
def unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    '''
    Reduce a broadcast gradient back to the shape of the operand it flowed from.

    :param grad: The gradient with the broadcast (output) shape.
    :type grad: np.ndarray
    :param shape: The operand shape.
    :type shape: Tuple[int, ...]
    :return: The gradient summed over broadcast axes.
    :rtype: np.ndarray
    '''

    # Sum away leading axes introduced by broadcasting.
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)

    # Sum over axes that were stretched from size 1.
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# ** helper: as_tensor
def as_tensor(value: Any) -> 'Tensor':
    '''
    Wrap a constant (scalar or array) as an untracked tensor.
    '''

    if isinstance(value, Tensor):
        return value
    return Tensor(value)


# *** classes

# ** class: tensor
class Tensor:
    '''
    A dense float64 array with optional reverse-mode gradient tracking.
    Each tensor produced by a tracked operation remembers its parents and a
    gradient rule mapping the output gradient to one gradient per parent.
    '''

    # * attribute: data
    data: np.ndarray

    # * attribute: requires_grad
    requires_grad: bool

    # * attribute: grad
    grad: Optional[np.ndarray]

    # * init
    def __init__(self, data: Any, requires_grad: bool = False):
        '''
        Initialize a leaf tensor.

        :param data: Array-like values, converted to float64.
        :type data: Any
        :param requires_grad: Whether gradients should be accumulated into this tensor.
        :type requires_grad: bool
        '''

        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = None
        self.op = 'leaf'
        self.parents: Tuple['Tensor', ...] = ()
        self.grad_fn: Optional[Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]] = None

    # * method: from_op (static)
    @staticmethod
    def from_op(
            data: np.ndarray,
            parents: Sequence['Tensor'],
            grad_fn: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]],
            op: str,
        ) -> 'Tensor':
        '''
        Build the output tensor of an operation, recording it in the graph only
        when at least one parent tracks gradients.

        :param data: The forward result.
        :type data: np.ndarray
        :param parents: The operation inputs.
        :type parents: Sequence[Tensor]
        :param grad_fn: Maps the output gradient to one gradient per parent.
        :type grad_fn: Callable
        :param op: The operation name.
        :type op: str
        :return: The output tensor.
        :rtype: Tensor
        '''

        out = Tensor(data)
        out.op = op
        if any(p.requires_grad for p in parents):
            out.requires_grad = True
            out.parents = tuple(parents)
            out.grad_fn = grad_fn
        return out

    # * property: shape
    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    # * property: ndim
    @property
    def ndim(self) -> int:
        return self.data.ndim

    # * property: is_leaf
    @property
    def is_leaf(self) -> bool:
        return self.grad_fn is None

    # * method: item
    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    # * method: numpy
    def numpy(self) -> np.ndarray:
        return self.data.copy()

    # * method: detach
    def detach(self) -> 'Tensor':
        return Tensor(self.data.copy())

    # * method: zero_grad
    def zero_grad(self) -> None:
        self.grad = None

    # * method: backward
    def backward(self) -> 'ComputationRecord':
        '''
        Populate gradients of every tracked tensor reachable from this scalar.

        :return: The computation record replayed in reverse.
        :rtype: ComputationRecord
        '''

        return ComputationRecord.trace(self).backward()

    # * method: __repr__
    def __repr__(self) -> str:
        return f'Tensor(shape={self.shape}, op={self.op}, requires_grad={self.requires_grad})'

    # * method: arithmetic operators
    def __add__(self, other): return TensorOps.add(self, as_tensor(other))
    def __radd__(self, other): return TensorOps.add(as_tensor(other), self)
    def __sub__(self, other): return TensorOps.sub(self, as_tensor(other))
    def __rsub__(self, other): return TensorOps.sub(as_tensor(other), self)
    def __mul__(self, other): return TensorOps.mul(self, as_tensor(other))
    def __rmul__(self, other): return TensorOps.mul(as_tensor(other), self)
    def __truediv__(self, other): return TensorOps.div(self, as_tensor(other))
    def __rtruediv__(self, other): return TensorOps.div(as_tensor(other), self)
    def __neg__(self): return TensorOps.mul(self, Tensor(-1.0))
    def __matmul__(self, other): return TensorOps.matmul(self, other)
    def __getitem__(self, key): return TensorOps.index(self, key)

    # * method: reductions and views
    def sum(self, axis=None, keepdims=False): return TensorOps.sum(self, axis, keepdims)
    def mean(self, axis=None, keepdims=False): return TensorOps.mean(self, axis, keepdims)
    def reshape(self, *shape): return TensorOps.reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], (tuple, list)) else shape)
    def transpose(self, *axes): return TensorOps.transpose(self, axes if axes else None)


# ** class: computation_record
class ComputationRecord:
    '''
    The executed operations reachable from a root tensor, in topological
    order: every operation appears after all operations producing its inputs.
    '''

    # * init
    def __init__(self, root: Tensor, operations: List[Tensor]):
        self.root = root
        self.operations = operations

    # * method: trace (static)
    @staticmethod
    def trace(root: Tensor) -> 'ComputationRecord':
        '''
        Collect the tracked graph below a root tensor in topological order.

        :param root: The root (loss) tensor.
        :type root: Tensor
        :return: The computation record.
        :rtype: ComputationRecord
        '''

        # Iterative post-order depth-first search (graphs can be deep).
        order: List[Tensor] = []
        visited = set()
        stack: List[Tuple[Tensor, bool]] = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node.parents:
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))

        return ComputationRecord(root, order)

    # * method: backward
    def backward(self) -> 'ComputationRecord':
        '''
        Replay the chain rule in reverse. Leaf tensors accumulate into their
        existing gradient; intermediate tensors receive this pass's gradient.

        :return: This record.
        :rtype: ComputationRecord
        '''

        # A loss must be a single tracked value.
        if self.root.data.size != 1:
            RaiseError.execute(
                error_code='CONTRACT_VIOLATION',
                operation='backward',
                reason=f'backward requires a scalar loss, got shape {self.root.shape}',
            )
        if not self.root.requires_grad:
            RaiseError.execute(
                error_code='CONTRACT_VIOLATION',
                operation='backward',
                reason=f'backward requires a loss produced by tracked operations, got {self.root.op}',
            )

        # Seed the root and propagate in reverse topological order.
        grads: Dict[int, np.ndarray] = {id(self.root): np.ones_like(self.root.data)}
        for node in reversed(self.operations):
            grad = grads.get(id(node))
            if grad is None or node.grad_fn is None:
                continue
            parent_grads = node.grad_fn(grad)
            for parent, parent_grad in zip(node.parents, parent_grads):
                if parent_grad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + parent_grad
                else:
                    grads[key] = np.array(parent_grad, dtype=np.float64)

        # Publish gradients.
        for node in self.operations:
            grad = grads.get(id(node))
            if grad is None:
                continue
            if node.is_leaf:
                node.grad = grad.copy() if node.grad is None else node.grad + grad
            else:
                node.grad = grad
        return self


# ** class: tensor_ops
class TensorOps:
    '''
    Differentiable primitives over Tensor. Every forward rule is paired with
    its gradient rule; shapes are checked and reported through SHAPE_MISMATCH.
    '''

    # * method: add (static)
    @staticmethod
    def add(a: Tensor, b: Tensor) -> Tensor:
        return Tensor.from_op(
            a.data + b.data, (a, b),
            lambda g: (unbroadcast(g, a.shape), unbroadcast(g, b.shape)),
            'add',
        )

    # * method: sub (static)
    @staticmethod
    def sub(a: Tensor, b: Tensor) -> Tensor:
        return Tensor.from_op(
            a.data - b.data, (a, b),
            lambda g: (unbroadcast(g, a.shape), unbroadcast(-g, b.shape)),
            'sub',
        )

    # * method: mul (static)
    @staticmethod
    def mul(a: Tensor, b: Tensor) -> Tensor:
        return Tensor.from_op(
            a.data * b.data, (a, b),
            lambda g: (unbroadcast(g * b.data, a.shape), unbroadcast(g * a.data, b.shape)),
            'mul',
        )

    # * method: div (static)
    @staticmethod
    def div(a: Tensor, b: Tensor) -> Tensor:
        return Tensor.from_op(
            a.data / b.data, (a, b),
            lambda g: (
                unbroadcast(g / b.data, a.shape),
                unbroadcast(-g * a.data / (b.data * b.data), b.shape),
            ),
            'div',
        )

    # * method: matmul (static)
    @staticmethod
    def matmul(a: Tensor, b: Tensor) -> Tensor:
        '''
        Matrix product of [..×m×k] and [..×k×n]; leading batch dims must agree.

        :param a: The left operand.
        :type a: Tensor
        :param b: The right operand.
        :type b: Tensor
        :return: The [..×m×n] product.
        :rtype: Tensor
        '''

        # Inner and batch dimensions must agree exactly.
        if a.ndim < 2 or a.ndim != b.ndim or a.shape[:-2] != b.shape[:-2] or a.shape[-1] != b.shape[-2]:
            RaiseError.execute(
                error_code='SHAPE_MISMATCH',
                operation='matmul',
                left=str(a.shape),
                right=str(b.shape),
            )

        return Tensor.from_op(
            np.matmul(a.data, b.data), (a, b),
            lambda g: (
                np.matmul(g, np.swapaxes(b.data, -1, -2)),
                np.matmul(np.swapaxes(a.data, -1, -2), g),
            ),
            'matmul',
        )

    # * method: exp (static)
    @staticmethod
    def exp(x: Tensor) -> Tensor:
        out = np.exp(x.data)
        return Tensor.from_op(out, (x,), lambda g: (g * out,), 'exp')

    # * method: log (static)
    @staticmethod
    def log(x: Tensor) -> Tensor:
        return Tensor.from_op(np.log(x.data), (x,), lambda g: (g / x.data,), 'log')

    # * method: sqrt (static)
    @staticmethod
    def sqrt(x: Tensor) -> Tensor:
        out = np.sqrt(x.data)
        return Tensor.from_op(out, (x,), lambda g: (g * 0.5 / out,), 'sqrt')

    # * method: sigmoid (static)
    @staticmethod
    def sigmoid(x: Tensor) -> Tensor:
        out = TensorOps.stable_sigmoid(x.data)
        return Tensor.from_op(out, (x,), lambda g: (g * out * (1.0 - out),), 'sigmoid')

    # * method: stable_sigmoid (static)
    @staticmethod
    def stable_sigmoid(values: np.ndarray) -> np.ndarray:
        '''
        Overflow-free logistic function on a raw array.
        '''

        values = np.asarray(values, dtype=np.float64)
        out = np.empty_like(values)
        positive = values >= 0
        out[positive] = 1.0 / (1.0 + np.exp(-values[positive]))
        exp_v = np.exp(values[~positive])
        out[~positive] = exp_v / (1.0 + exp_v)
        return out

    # * method: relu (static)
    @staticmethod
    def relu(x: Tensor) -> Tensor:
        mask = (x.data > 0).astype(np.float64)
        return Tensor.from_op(x.data * mask, (x,), lambda g: (g * mask,), 'relu')

    # * method: gelu (static)
    @staticmethod
    def gelu(x: Tensor) -> Tensor:
        '''
        Tanh-approximated GELU; smooth everywhere, so finite differences
        never straddle a kink.
        '''

        v = x.data
        inner = SQRT_TWO_OVER_PI * (v + GELU_COEFFICIENT * v ** 3)
        t = np.tanh(inner)
        out = 0.5 * v * (1.0 + t)

        def grad_fn(g):
            d_inner = SQRT_TWO_OVER_PI * (1.0 + 3.0 * GELU_COEFFICIENT * v ** 2)
            return (g * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * d_inner),)

        return Tensor.from_op(out, (x,), grad_fn, 'gelu')

    # * method: sum (static)
    @staticmethod
    def sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
        out = x.data.sum(axis=axis, keepdims=keepdims)

        def grad_fn(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, x.shape).copy(),)

        return Tensor.from_op(out, (x,), grad_fn, 'sum')

    # * method: mean (static)
    @staticmethod
    def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
        count = x.data.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
        return TensorOps.sum(x, axis, keepdims) * (1.0 / float(count))

    # * method: reshape (static)
    @staticmethod
    def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
        return Tensor.from_op(
            x.data.reshape(tuple(shape)), (x,),
            lambda g: (g.reshape(x.shape),),
            'reshape',
        )

    # * method: transpose (static)
    @staticmethod
    def transpose(x: Tensor, axes: Optional[Sequence[int]] = None) -> Tensor:
        axes = tuple(reversed(range(x.ndim))) if axes is None else tuple(axes)
        inverse = tuple(np.argsort(axes))
        return Tensor.from_op(
            np.transpose(x.data, axes), (x,),
            lambda g: (np.transpose(g, inverse),),
            'transpose',
        )

    # * method: index (static)
    @staticmethod
    def index(x: Tensor, key) -> Tensor:
        '''
        Basic or integer-array indexing; the gradient scatters back with
        accumulation so repeated indices are summed.
        '''

        def grad_fn(g):
            full = np.zeros_like(x.data)
            np.add.at(full, key, g)
            return (full,)

        return Tensor.from_op(x.data[key], (x,), grad_fn, 'index')

    # * method: concat (static)
    @staticmethod
    def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
        '''
        Join tensors along an existing axis.
        '''

        sizes = [t.shape[axis] for t in tensors]
        bounds = np.cumsum([0] + sizes)

        def grad_fn(g):
            grads = []
            for start, stop in zip(bounds[:-1], bounds[1:]):
                slicer = [slice(None)] * g.ndim
                slicer[axis] = slice(int(start), int(stop))
                grads.append(g[tuple(slicer)])
            return grads

        return Tensor.from_op(
            np.concatenate([t.data for t in tensors], axis=axis),
            tuple(tensors), grad_fn, 'concat',
        )

    # * method: softmax (static)
    @staticmethod
    def softmax(x: Tensor, axis: int = -1) -> Tensor:
        '''
        Max-subtracted softmax along one axis.

        :param x: The logits.
        :type x: Tensor
        :param axis: The normalization axis.
        :type axis: int
        :return: Nonnegative values whose slices along axis sum to 1.
        :rtype: Tensor
        '''

        if not -x.ndim <= axis < max(x.ndim, 1):
            RaiseError.execute(
                error_code='SHAPE_MISMATCH',
                operation='softmax',
                left=str(x.shape),
                right=f'axis {axis}',
            )

        shifted = x.data - x.data.max(axis=axis, keepdims=True)
        exps = np.exp(shifted)
        out = exps / exps.sum(axis=axis, keepdims=True)

        return Tensor.from_op(
            out, (x,),
            lambda g: (out * (g - (g * out).sum(axis=axis, keepdims=True)),),
            'softmax',
        )

    # * method: layer_norm (static)
    @staticmethod
    def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
        '''
        Normalize over the last dimension, then apply the affine map.

        :param x: The input [..×d].
        :type x: Tensor
        :param gamma: The scale [d].
        :type gamma: Tensor
        :param beta: The shift [d].
        :type beta: Tensor
        :param eps: The variance floor.
        :type eps: float
        :return: The normalized tensor.
        :rtype: Tensor
        '''

        d = x.shape[-1]
        if gamma.shape != (d,) or beta.shape != (d,):
            RaiseError.execute(
                error_code='SHAPE_MISMATCH',
                operation='layer_norm',
                left=str(x.shape),
                right=f'gamma {gamma.shape}, beta {beta.shape}',
            )

        mu = x.data.mean(axis=-1, keepdims=True)
        centered = x.data - mu
        var = (centered * centered).mean(axis=-1, keepdims=True)
        inv_std = 1.0 / np.sqrt(var + eps)
        xhat = centered * inv_std
        out = xhat * gamma.data + beta.data

        def grad_fn(g):
            lead = tuple(range(g.ndim - 1))
            dxhat = g * gamma.data
            dx = inv_std * (
                dxhat
                - dxhat.mean(axis=-1, keepdims=True)
                - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
            )
            return dx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

        return Tensor.from_op(out, (x, gamma, beta), grad_fn, 'layer_norm')

    # * method: interpolation_matrix (static)
    @staticmethod
    def interpolation_matrix(in_size: int, out_size: int) -> np.ndarray:
        '''
        Build the [out×in] 1D bilinear weights with the align-corners=false
        convention (source coordinates clamped at the low edge).

        :param in_size: The source length.
        :type in_size: int
        :param out_size: The target length.
        :type out_size: int
        :return: Row-stochastic interpolation weights.
        :rtype: np.ndarray
        '''

        weights = np.zeros((out_size, in_size))
        scale = in_size / out_size
        for dst in range(out_size):
            src = max((dst + 0.5) * scale - 0.5, 0.0)
            low = min(int(np.floor(src)), in_size - 1)
            high = min(low + 1, in_size - 1)
            frac = src - low
            weights[dst, low] += 1.0 - frac
            weights[dst, high] += frac
        return weights

    # * method: bilinear_upsample (static)
    @staticmethod
    def bilinear_upsample(x: Tensor, out_h: int, out_w: int) -> Tensor:
        '''
        Bilinear resize of an [h×w×c] map to [out_h×out_w×c].

        :param x: The input map.
        :type x: Tensor
        :param out_h: The target height (≥ h).
        :type out_h: int
        :param out_w: The target width (≥ w).
        :type out_w: int
        :return: The upsampled map.
        :rtype: Tensor
        '''

        if x.ndim != 3 or out_h <= 0 or out_w <= 0 or out_h < x.shape[0] or out_w < x.shape[1]:
            RaiseError.execute(
                error_code='SHAPE_MISMATCH',
                operation='bilinear_upsample',
                left=str(x.shape),
                right=f'target {out_h}x{out_w}',
            )

        rows = TensorOps.interpolation_matrix(x.shape[0], out_h)
        cols = TensorOps.interpolation_matrix(x.shape[1], out_w)
        out = np.einsum('oh,hwc,pw->opc', rows, x.data, cols)

        return Tensor.from_op(
            out, (x,),
            lambda g: (np.einsum('oh,opc,pw->hwc', rows, g, cols),),
            'bilinear_upsample',
        )

    # * method: conv2d (static)
    @staticmethod
    def conv2d(x: Tensor, kernel: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
        '''
        Cross-correlation of an [h×w×c_in] map with a [kh×kw×c_in×c_out] kernel.

        :param x: The input map.
        :type x: Tensor
        :param kernel: The kernel.
        :type kernel: Tensor
        :param stride: The window step.
        :type stride: int
        :param padding: Zero padding on every spatial side.
        :type padding: int
        :return: The [oh×ow×c_out] output, oh = floor((h+2p-kh)/stride)+1.
        :rtype: Tensor
        '''

        h, w, c_in = x.shape if x.ndim == 3 else (0, 0, -1)
        kh, kw, k_in, c_out = kernel.shape if kernel.ndim == 4 else (0, 0, -2, 0)
        if c_in != k_in or kh > h + 2 * padding or kw > w + 2 * padding or stride < 1:
            RaiseError.execute(
                error_code='SHAPE_MISMATCH',
                operation='conv2d',
                left=str(x.shape),
                right=f'kernel {kernel.shape}, stride {stride}, padding {padding}',
            )

        padded = np.pad(x.data, ((padding, padding), (padding, padding), (0, 0)))
        oh = (h + 2 * padding - kh) // stride + 1
        ow = (w + 2 * padding - kw) // stride + 1

        # Patches view [oh×ow×c_in×kh×kw], reordered to [oh×ow×kh×kw×c_in].
        windows = np.lib.stride_tricks.sliding_window_view(padded, (kh, kw), axis=(0, 1))
        patches = windows[::stride, ::stride][:oh, :ow].transpose(0, 1, 3, 4, 2)
        out = np.tensordot(patches, kernel.data, axes=([2, 3, 4], [0, 1, 2]))

        def grad_fn(g):
            d_kernel = np.tensordot(patches, g, axes=([0, 1], [0, 1]))
            d_patches = np.tensordot(g, kernel.data, axes=([2], [3]))
            d_padded = np.zeros_like(padded)
            for i in range(kh):
                for j in range(kw):
                    d_padded[i:i + stride * oh:stride, j:j + stride * ow:stride] += d_patches[:, :, i, j, :]
            d_x = d_padded[padding:padding + h, padding:padding + w]
            return d_x, d_kernel

        return Tensor.from_op(out, (x, kernel), grad_fn, 'conv2d')

    # * method: bce_with_logits (static)
    @staticmethod
    def bce_with_logits(logits: Tensor, target: np.ndarray) -> Tensor:
        '''
        Mean binary cross-entropy in the log-sum-exp form
        max(x,0) - x·y + log(1 + exp(-|x|)).

        :param logits: The raw scores.
        :type logits: Tensor
        :param target: Binary targets of the same shape.
        :type target: np.ndarray
        :return: The scalar loss.
        :rtype: Tensor
        '''

        x = logits.data
        y = np.asarray(target, dtype=np.float64)
        loss = np.maximum(x, 0.0) - x * y + np.log1p(np.exp(-np.abs(x)))
        count = float(x.size)

        return Tensor.from_op(
            np.array(loss.sum() / count), (logits,),
            lambda g: (g * (TensorOps.stable_sigmoid(x) - y) / count,),
            'bce_with_logits',
        )
