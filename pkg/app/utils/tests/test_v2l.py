# *** imports

# ** core
import dataclasses

# ** infra
import numpy as np
import pytest

# ** app
from tiferet import TiferetError
from app.utils.activation import ActivatedPyramid
from app.utils.attention import AttentionProbe
from app.utils.config import ConfigLoader
from app.utils.params import ParameterStore
from app.utils.tensor import Tensor
from app.utils.v2l import V2LDecoder


# *** fixtures

# ** fixture: config
@pytest.fixture
def config():
    return ConfigLoader.resolve('smoke').model


# ** fixture: activated
@pytest.fixture
def activated(config) -> ActivatedPyramid:
    '''
    A random activated pyramid for a 64×64 image.
    '''

    rng = np.random.default_rng(3)
    return ActivatedPyramid(levels=[
        Tensor(rng.normal(size=(size, size, config.fusion_dim))) for size in (16, 8, 4, 2)
    ])


# ** fixture: words
@pytest.fixture
def words(config):
    rng = np.random.default_rng(4)
    mask = np.arange(config.max_len) >= 5
    return rng.normal(size=(config.max_len, config.text_dim)), mask


# *** helpers

# ** helper: declared
def declared(config):
    '''
    Declare a decoder for config and return its store and scope.
    '''

    store = ParameterStore(seed=8)
    scope = store.scope('v2l')
    V2LDecoder.declare(scope, config)
    return store, scope


# ** helper: identity_smoothing
def identity_smoothing(scope, dim: int) -> None:
    '''
    Set every 3×3 smoothing conv to a centre-tap identity.
    '''

    for level in (2, 3, 4):
        kernel = scope[f'smooth{level}.kernel'].data
        kernel[...] = 0.0
        kernel[1, 1] = np.eye(dim)


# *** tests

# ** test: positional_embedding_values
def test_positional_embedding_values() -> None:
    '''
    Test the table shape and the (y, x) = (0, 0) and (0, 1) rows.
    '''

    # Build a 3×2 table of width 8.
    table = V2LDecoder.positional_embedding(3, 2, 8)

    # Assert the shape, the origin row and the x-varying quarter.
    assert table.shape == (6, 8)
    assert np.allclose(table[0], [0, 0, 1, 1, 0, 0, 1, 1])
    assert table[1, 4] == pytest.approx(np.sin(1.0))
    assert table[2, 0] == pytest.approx(np.sin(1.0))


# ** test: positional_embedding_bad_width
def test_positional_embedding_bad_width() -> None:
    '''
    Test that a width not divisible by 4 raises INVALID_CONFIG.
    '''

    # Build a table of width 6 and expect a TiferetError.
    with pytest.raises(TiferetError) as exc_info:
        V2LDecoder.positional_embedding(2, 2, 6)

    # Assert the error code.
    assert exc_info.value.error_code == 'INVALID_CONFIG'


# ** test: vision_projection_shape_and_padding
def test_vision_projection_shape_and_padding(config, activated, words) -> None:
    '''
    Test that one VPM keeps the map shape and ignores padded word content.
    '''

    # Project words and run the VPM twice with different padded content.
    _, scope = declared(config)
    f_w, mask = words
    rng = np.random.default_rng(9)
    proj = rng.normal(size=(config.max_len, config.fusion_dim))
    other = proj.copy()
    other[mask] = -20.0
    first = V2LDecoder.vision_projection(activated.level(4), Tensor(proj), mask, scope.scope('vpm4'), config.fusion_heads)
    second = V2LDecoder.vision_projection(activated.level(4), Tensor(other), mask, scope.scope('vpm4'), config.fusion_heads)

    # Assert shape and invariance.
    assert first.shape == activated.level(4).shape
    assert np.abs(first.data - second.data).max() < 1e-12


# ** test: vision_projection_width_mismatch
def test_vision_projection_width_mismatch(config, activated) -> None:
    '''
    Test that word tokens of the wrong width raise SHAPE_MISMATCH.
    '''

    # Run a VPM with narrow words and expect a TiferetError.
    _, scope = declared(config)
    with pytest.raises(TiferetError) as exc_info:
        V2LDecoder.vision_projection(
            activated.level(5), Tensor(np.zeros((3, 4))), np.zeros(3, dtype=bool),
            scope.scope('vpm5'), config.fusion_heads,
        )

    # Assert the error code.
    assert exc_info.value.error_code == 'SHAPE_MISMATCH'


# ** test: fpn_fuse_constant_levels
def test_fpn_fuse_constant_levels(config) -> None:
    '''
    Test that with identity smoothing, constant levels fuse to their sum.
    '''

    # Build constant levels and identity smoothing.
    _, scope = declared(config)
    dim = config.fusion_dim
    identity_smoothing(scope, dim)
    levels = [Tensor(np.full((size, size, dim), value)) for size, value in zip((16, 8, 4, 2), (1.0, 2.0, 3.0, 4.0))]

    # Fuse.
    fused = V2LDecoder.fpn_fuse(levels, scope)

    # Assert the stride-4 grid and the summed constant.
    assert fused.shape == (16, 16, dim)
    assert np.allclose(fused.features.data, 10.0)


# ** test: fpn_fuse_shape_errors
def test_fpn_fuse_shape_errors(config, activated) -> None:
    '''
    Test that a wrong level count or a mismatched level raises SHAPE_MISMATCH.
    '''

    # Build two bad level lists.
    _, scope = declared(config)
    levels = list(activated.levels)
    bad = levels[:2] + [Tensor(np.zeros((5, 5, config.fusion_dim)))] + levels[3:]

    # Assert both are rejected.
    for candidate in (levels[:3], bad):
        with pytest.raises(TiferetError) as exc_info:
            V2LDecoder.fpn_fuse(candidate, scope)
        assert exc_info.value.error_code == 'SHAPE_MISMATCH'


# ** test: decode_modes
@pytest.mark.parametrize('mode, projected', [
    ('multi', [2, 3, 4, 5]),
    ('single', [5]),
    ('none', []),
])
def test_decode_modes(config, activated, words, mode, projected) -> None:
    '''
    Test that vpm_mode selects which levels receive word guidance.
    '''

    # Decode under the mode with a probe.
    mode_config = dataclasses.replace(config, vpm_mode=mode)
    store, scope = declared(mode_config)
    probe = AttentionProbe()
    f_w, mask = words
    aligned = V2LDecoder.decode(activated, Tensor(f_w), mask, scope, mode_config, probe)

    # Assert the output grid, recorded levels and declared parameters.
    assert aligned.shape == (16, 16, config.fusion_dim)
    recorded = sorted({int(name.split('.')[1][3:]) for name in probe.names()})
    assert recorded == projected
    assert any(name.startswith('v2l.word_proj') for name in store.names()) == bool(projected)


# ** test: decode_without_vpm_is_fpn
def test_decode_without_vpm_is_fpn(config, activated, words) -> None:
    '''
    Test that with no VPMs the decoder reduces to the FPN over the
    activated levels.
    '''

    # Decode with vpm_mode none.
    none_config = dataclasses.replace(config, vpm_mode='none')
    _, scope = declared(none_config)
    f_w, mask = words
    aligned = V2LDecoder.decode(activated, Tensor(f_w), mask, scope, none_config)

    # Assert equality with a direct fuse.
    expected = V2LDecoder.fpn_fuse(activated.levels, scope)
    assert np.array_equal(aligned.features.data, expected.features.data)


# ** test: vision_projection_without_self_attention
def test_vision_projection_without_self_attention(config, activated) -> None:
    '''
    Test that the cross-only VPM variant records only cross-attention.
    '''

    # Declare a cross-only VPM and run it.
    cross_only = dataclasses.replace(config, vpm_self_attention=False)
    store, scope = declared(cross_only)
    probe = AttentionProbe()
    words = Tensor(np.random.default_rng(5).normal(size=(4, config.fusion_dim)))
    V2LDecoder.vision_projection(
        activated.level(5), words, np.zeros(4, dtype=bool), scope.scope('vpm5'),
        config.fusion_heads, False, config.ln_eps, probe, 'vpm5',
    )

    # Assert the records and the absent parameters.
    assert probe.names() == ['vpm5.cross_attn']
    assert not any('self_attn' in name for name in store.names())
