# *** imports

# ** core
import math

# ** infra
import numpy as np
import pytest

# ** app
from tiferet import TiferetError
from app.utils.tensor import Tensor, ComputationRecord, TensorOps
from app.utils.gradcheck import GradientChecker


# *** constants

# ** constant: exact_tolerance
EXACT_TOLERANCE = 1e-12


# *** fixtures

# ** fixture: rng
@pytest.fixture
def rng() -> np.random.Generator:
    '''
    A fixed generator for random operands.
    '''
    return np.random.default_rng(1234)


# *** tests

# ** test: matmul_identity
def test_matmul_identity(rng) -> None:
    '''
    Test that the identity matrix leaves the right operand unchanged.
    '''

    # Multiply the identity by a random matrix.
    b = rng.normal(size=(3, 4))
    result = TensorOps.matmul(Tensor(np.eye(3)), Tensor(b))

    # Assert the product equals the operand.
    assert np.array_equal(result.data, b)


# ** test: matmul_zero_annihilation
def test_matmul_zero_annihilation() -> None:
    '''
    Test that a zero column annihilates the product.
    '''

    # Multiply a 2×2 matrix by a zero column.
    result = Tensor([[1.0, 2.0], [3.0, 4.0]]) @ Tensor([[0.0], [0.0]])

    # Assert the product is a zero column.
    assert result.shape == (2, 1)
    assert np.array_equal(result.data, np.zeros((2, 1)))


# ** test: matmul_triple_loop_oracle
def test_matmul_triple_loop_oracle(rng) -> None:
    '''
    Test the product against a triple-loop reference.
    '''

    # Build random operands and the loop product.
    a, b = rng.normal(size=(4, 5)), rng.normal(size=(5, 3))
    expected = np.zeros((4, 3))
    for i in range(4):
        for j in range(3):
            for k in range(5):
                expected[i, j] += a[i, k] * b[k, j]

    # Assert the tensor product matches.
    result = Tensor(a) @ Tensor(b)
    assert np.abs(result.data - expected).max() < EXACT_TOLERANCE


# ** test: matmul_shape_mismatch
def test_matmul_shape_mismatch() -> None:
    '''
    Test that mismatched inner dimensions raise SHAPE_MISMATCH.
    '''

    # Multiply incompatible operands and expect a TiferetError.
    with pytest.raises(TiferetError) as exc_info:
        Tensor(np.ones((2, 3))) @ Tensor(np.ones((2, 3)))

    # Assert the error code.
    assert exc_info.value.error_code == 'SHAPE_MISMATCH'


# ** test: softmax_symmetric
def test_softmax_symmetric() -> None:
    '''
    Test that equal logits produce a uniform distribution.
    '''

    # Apply softmax to equal logits.
    result = TensorOps.softmax(Tensor([5.0, 5.0, 5.0]))

    # Assert every weight is one third.
    assert np.allclose(result.data, [1 / 3, 1 / 3, 1 / 3], atol=EXACT_TOLERANCE)


# ** test: softmax_log_two
def test_softmax_log_two() -> None:
    '''
    Test softmax([0, ln 2]) = [1/3, 2/3].
    '''

    # Apply softmax to [0, ln 2].
    result = TensorOps.softmax(Tensor([0.0, math.log(2.0)]))

    # Assert the analytic result.
    assert np.allclose(result.data, [1 / 3, 2 / 3], atol=EXACT_TOLERANCE)


# ** test: softmax_reference
def test_softmax_reference(rng) -> None:
    '''
    Test softmax on a random vector against a compensated-sum reference.
    '''

    # Compute the reference with math.exp and fsum.
    values = rng.normal(size=8) * 3.0
    exps = [math.exp(v) for v in values]
    total = math.fsum(exps)
    expected = np.array([e / total for e in exps])

    # Assert the tensor softmax matches and sums to one.
    result = TensorOps.softmax(Tensor(values))
    assert np.abs(result.data - expected).max() < EXACT_TOLERANCE
    assert abs(result.data.sum() - 1.0) < EXACT_TOLERANCE


# ** test: softmax_large_logits
def test_softmax_large_logits() -> None:
    '''
    Test that max-subtraction keeps huge logits finite.
    '''

    # Apply softmax to very large logits.
    result = TensorOps.softmax(Tensor([1000.0, 1000.0, -1000.0]))

    # Assert a finite, normalized result.
    assert np.isfinite(result.data).all()
    assert np.allclose(result.data, [0.5, 0.5, 0.0])


# ** test: layer_norm_constant_row
def test_layer_norm_constant_row() -> None:
    '''
    Test that a constant row normalizes to zeros.
    '''

    # Normalize a constant row.
    result = TensorOps.layer_norm(Tensor([[4.0, 4.0, 4.0]]), Tensor(np.ones(3)), Tensor(np.zeros(3)))

    # Assert every value is zero.
    assert np.array_equal(result.data, np.zeros((1, 3)))


# ** test: layer_norm_two_point
def test_layer_norm_two_point() -> None:
    '''
    Test that [1, 3] standardizes to [-1, 1].
    '''

    # Normalize a two-point row with a negligible eps.
    result = TensorOps.layer_norm(Tensor([[1.0, 3.0]]), Tensor(np.ones(2)), Tensor(np.zeros(2)), eps=1e-12)

    # Assert the standardized values.
    assert np.allclose(result.data, [[-1.0, 1.0]], atol=1e-9)


# ** test: layer_norm_moments
def test_layer_norm_moments(rng) -> None:
    '''
    Test that each normalized row has zero mean and unit variance.
    '''

    # Normalize random rows.
    result = TensorOps.layer_norm(Tensor(rng.normal(size=(2, 6)) * 5.0 + 2.0), Tensor(np.ones(6)), Tensor(np.zeros(6)))

    # Assert the row moments.
    assert np.abs(result.data.mean(axis=-1)).max() < 1e-9
    assert np.abs(result.data.var(axis=-1) - 1.0).max() < 1e-6


# ** test: bilinear_upsample_constant
def test_bilinear_upsample_constant() -> None:
    '''
    Test that interpolation preserves a constant map at any scale.
    '''

    # Upsample a constant map.
    result = TensorOps.bilinear_upsample(Tensor(np.full((3, 2, 2), 0.7)), 12, 7)

    # Assert every value is preserved.
    assert result.shape == (12, 7, 2)
    assert np.allclose(result.data, 0.7, atol=EXACT_TOLERANCE)


# ** test: bilinear_upsample_single_pixel
def test_bilinear_upsample_single_pixel() -> None:
    '''
    Test that a 1×1 map spreads its value everywhere.
    '''

    # Upsample a single pixel.
    result = TensorOps.bilinear_upsample(Tensor([[[2.5]]]), 5, 4)

    # Assert every output equals the input value.
    assert np.allclose(result.data, 2.5, atol=EXACT_TOLERANCE)


# ** test: bilinear_upsample_oracle
def test_bilinear_upsample_oracle() -> None:
    '''
    Test [[0,1],[2,3]] → 4×4 against the half-pixel formula. Source
    coordinates for the four outputs are 0, 0.25, 0.75 and 1 (clamped), and
    the map is linear (v = 2y + x), so each output is 2·r[i] + r[j].
    '''

    # Upsample the 2×2 map.
    source = np.array([[0.0, 1.0], [2.0, 3.0]]).reshape(2, 2, 1)
    result = TensorOps.bilinear_upsample(Tensor(source), 4, 4)

    # Build the per-pixel oracle.
    coords = [0.0, 0.25, 0.75, 1.0]
    expected = np.array([[2 * coords[i] + coords[j] for j in range(4)] for i in range(4)])

    # Assert the result matches.
    assert np.abs(result.data[:, :, 0] - expected).max() < EXACT_TOLERANCE


# ** test: bilinear_upsample_zero_target
def test_bilinear_upsample_zero_target() -> None:
    '''
    Test that a zero-sized target raises SHAPE_MISMATCH.
    '''

    # Upsample to a zero height and expect a TiferetError.
    with pytest.raises(TiferetError) as exc_info:
        TensorOps.bilinear_upsample(Tensor(np.ones((2, 2, 1))), 0, 4)

    # Assert the error code.
    assert exc_info.value.error_code == 'SHAPE_MISMATCH'


# ** test: conv2d_identity_kernel
def test_conv2d_identity_kernel(rng) -> None:
    '''
    Test that a 1×1 identity kernel returns the input.
    '''

    # Convolve with the per-channel identity.
    x = rng.normal(size=(5, 4, 3))
    kernel = np.eye(3).reshape(1, 1, 3, 3)
    result = TensorOps.conv2d(Tensor(x), Tensor(kernel))

    # Assert the output equals the input.
    assert np.abs(result.data - x).max() < EXACT_TOLERANCE


# ** test: conv2d_zero_kernel
def test_conv2d_zero_kernel(rng) -> None:
    '''
    Test that an all-zero kernel gives an all-zero output.
    '''

    # Convolve with zeros.
    result = TensorOps.conv2d(Tensor(rng.normal(size=(5, 5, 2))), Tensor(np.zeros((3, 3, 2, 4))), padding=1)

    # Assert the output is zero with the padded shape.
    assert result.shape == (5, 5, 4)
    assert np.array_equal(result.data, np.zeros((5, 5, 4)))


# ** test: conv2d_loop_oracle
@pytest.mark.parametrize('stride, padding', [(1, 0), (1, 1), (2, 1)])
def test_conv2d_loop_oracle(rng, stride, padding) -> None:
    '''
    Test cross-correlation against a direct loop.
    '''

    # Build random operands and the padded input.
    x, kernel = rng.normal(size=(5, 5, 2)), rng.normal(size=(3, 3, 2, 1))
    padded = np.pad(x, ((padding, padding), (padding, padding), (0, 0)))
    out_size = (5 + 2 * padding - 3) // stride + 1

    # Compute the loop oracle.
    expected = np.zeros((out_size, out_size, 1))
    for i in range(out_size):
        for j in range(out_size):
            for di in range(3):
                for dj in range(3):
                    for c in range(2):
                        expected[i, j, 0] += padded[i * stride + di, j * stride + dj, c] * kernel[di, dj, c, 0]

    # Assert the convolution matches.
    result = TensorOps.conv2d(Tensor(x), Tensor(kernel), stride, padding)
    assert np.abs(result.data - expected).max() < EXACT_TOLERANCE


# ** test: conv2d_kernel_too_large
def test_conv2d_kernel_too_large() -> None:
    '''
    Test that a kernel larger than the padded input raises SHAPE_MISMATCH.
    '''

    # Convolve a 2×2 map with a 5×5 kernel and expect a TiferetError.
    with pytest.raises(TiferetError) as exc_info:
        TensorOps.conv2d(Tensor(np.ones((2, 2, 1))), Tensor(np.ones((5, 5, 1, 1))))

    # Assert the error code.
    assert exc_info.value.error_code == 'SHAPE_MISMATCH'


# ** test: backward_sum
def test_backward_sum() -> None:
    '''
    Test that the gradient of sum(x) is all ones.
    '''

    # Backpropagate through a sum.
    x = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
    x.sum().backward()

    # Assert the gradient.
    assert np.array_equal(x.grad, np.ones((2, 3)))


# ** test: backward_square
def test_backward_square() -> None:
    '''
    Test that the gradient of sum(x*x) at [1, 2] is [2, 4].
    '''

    # Backpropagate through a sum of squares.
    x = Tensor([1.0, 2.0], requires_grad=True)
    (x * x).sum().backward()

    # Assert the analytic gradient.
    assert np.array_equal(x.grad, [2.0, 4.0])


# ** test: backward_accumulates_on_leaves
def test_backward_accumulates_on_leaves() -> None:
    '''
    Test that a second backward pass adds to existing leaf gradients.
    '''

    # Backpropagate twice through fresh graphs.
    x = Tensor([1.0, -1.0], requires_grad=True)
    (x * 3.0).sum().backward()
    (x * 3.0).sum().backward()

    # Assert the gradients were summed.
    assert np.array_equal(x.grad, [6.0, 6.0])


# ** test: backward_shared_subexpression
def test_backward_shared_subexpression() -> None:
    '''
    Test that a tensor used twice receives both gradient contributions.
    '''

    # Build y = x*2 and use it in two branches.
    x = Tensor([3.0], requires_grad=True)
    y = x * 2.0
    (y * y + y).sum().backward()

    # Assert d/dx (4x² + 2x) = 8x + 2.
    assert np.allclose(x.grad, [26.0])


# ** test: backward_deep_graph
def test_backward_deep_graph() -> None:
    '''
    Test that a very deep chain backpropagates without recursion limits.
    '''

    # Chain thousands of additions.
    x = Tensor([1.0], requires_grad=True)
    y = x
    for _ in range(5000):
        y = y + 1.0
    record = y.sum().backward()

    # Assert the gradient and the recorded operation count.
    assert np.array_equal(x.grad, [1.0])
    assert isinstance(record, ComputationRecord)
    assert len(record.operations) > 5000


# ** test: backward_topological_order
def test_backward_topological_order() -> None:
    '''
    Test that every recorded operation follows the operations producing its inputs.
    '''

    # Build a small diamond graph.
    x = Tensor([1.0, 2.0], requires_grad=True)
    a = x * 2.0
    b = TensorOps.exp(x)
    loss = (a + b).sum()
    record = ComputationRecord.trace(loss)

    # Assert each parent appears before its child.
    position = {id(node): i for i, node in enumerate(record.operations)}
    for node in record.operations:
        for parent in node.parents:
            if parent.requires_grad:
                assert position[id(parent)] < position[id(node)]


# ** test: backward_non_scalar
def test_backward_non_scalar() -> None:
    '''
    Test that backward on a non-scalar raises CONTRACT_VIOLATION.
    '''

    # Backpropagate from a vector and expect a TiferetError.
    x = Tensor([1.0, 2.0], requires_grad=True)
    with pytest.raises(TiferetError) as exc_info:
        (x * 2.0).backward()

    # Assert the error code.
    assert exc_info.value.error_code == 'CONTRACT_VIOLATION'


# ** test: index_repeated_gradient
def test_index_repeated_gradient() -> None:
    '''
    Test that repeated integer indices accumulate their gradients.
    '''

    # Gather rows 0, 2, 2.
    x = Tensor(np.ones((3, 2)), requires_grad=True)
    x[np.array([0, 2, 2])].sum().backward()

    # Assert row 2 received two contributions.
    assert np.array_equal(x.grad, [[1.0, 1.0], [0.0, 0.0], [2.0, 2.0]])


# ** test: broadcast_gradient
def test_broadcast_gradient() -> None:
    '''
    Test that a broadcast bias receives the summed gradient.
    '''

    # Add a [3] bias to a [4×3] matrix.
    x = Tensor(np.zeros((4, 3)), requires_grad=True)
    bias = Tensor(np.zeros(3), requires_grad=True)
    (x + bias).sum().backward()

    # Assert the bias gradient sums over the broadcast axis.
    assert np.array_equal(bias.grad, [4.0, 4.0, 4.0])


# ** test: untracked_constants
def test_untracked_constants() -> None:
    '''
    Test that operations on untracked tensors build no graph.
    '''

    # Combine two constants.
    result = Tensor([1.0]) * Tensor([2.0])

    # Assert the result is an untracked leaf.
    assert not result.requires_grad
    assert result.is_leaf


# ** test: stable_sigmoid_extremes
def test_stable_sigmoid_extremes() -> None:
    '''
    Test that the logistic function saturates without overflow.
    '''

    # Evaluate at extreme logits.
    values = TensorOps.stable_sigmoid(np.array([-1000.0, 0.0, 1000.0]))

    # Assert finite saturated values.
    assert np.array_equal(values, [0.0, 0.5, 1.0])


# ** test: bce_with_logits_log_two
def test_bce_with_logits_log_two() -> None:
    '''
    Test that a zero logit costs ln 2 for either class.
    '''

    # Evaluate zero logits against both classes.
    loss = TensorOps.bce_with_logits(Tensor(np.zeros((2, 2))), np.array([[0.0, 1.0], [1.0, 0.0]]))

    # Assert ln 2 per pixel.
    assert abs(loss.item() - math.log(2.0)) < EXACT_TOLERANCE


# ** test: grad_check_sum_of_squares
def test_grad_check_sum_of_squares(rng) -> None:
    '''
    Test that the checker reports a near-zero error for a polynomial.
    '''

    # Check sum(x*x) on every entry.
    x = Tensor(rng.normal(size=(3, 3)), requires_grad=True)
    report = GradientChecker.check(lambda: (x * x).sum(), {'x': x}, samples=None)

    # Assert the error is tiny and every entry was checked.
    assert report.worst < 1e-8
    assert report.passed
    assert report.checked == 9


# ** test: grad_check_softmax_cross_entropy
def test_grad_check_softmax_cross_entropy(rng) -> None:
    '''
    Test a softmax cross-entropy composite within tolerance.
    '''

    # Build -log softmax(x)[target] summed over rows.
    x = Tensor(rng.normal(size=(4, 5)), requires_grad=True)
    onehot = np.eye(5)[[0, 3, 1, 4]]

    def loss():
        return (TensorOps.log(TensorOps.softmax(x, axis=-1)) * Tensor(-onehot)).sum()

    # Assert the check passes.
    report = GradientChecker.check(loss, {'x': x}, samples=None)
    assert report.worst < 1e-4


# ** test: grad_check_detects_wrong_rule
def test_grad_check_detects_wrong_rule(rng) -> None:
    '''
    Test that a deliberately wrong gradient rule is flagged.
    '''

    # Square with a gradient missing its factor of 2.
    x = Tensor(rng.uniform(0.5, 1.5, size=4), requires_grad=True)

    def wrong_square():
        return Tensor.from_op(x.data ** 2, (x,), lambda g: (g * x.data,), 'wrong_square').sum()

    # Assert the report fails.
    report = GradientChecker.check(wrong_square, {'x': x}, samples=None)
    assert report.worst > 1e-2
    assert not report.passed
