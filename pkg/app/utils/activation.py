# *** imports

# ** core
from dataclasses import dataclass
from typing import List, Optional

# ** infra
import numpy as np

# ** app
from .attention import AttentionProbe, MultiHeadAttention
from .config import ModelConfig
from .layers import TransformerLayers
from .params import ParamScope
from .tensor import Tensor
from .vision import PYRAMID_LEVELS, PyramidFeatures


# *** models

# ** model: activated_pyramid
@dataclass
class ActivatedPyramid:
    '''
    Activated cross-modal features f_c^2..f_c^5, each [h×w×D].
    '''

    levels: List[Tensor]

    # * method: level
    def level(self, index: int) -> Tensor:
        return self.levels[PYRAMID_LEVELS.index(index)]


# *** utils

# ** util: activation_module
class ActivationModule:
    '''
    Encoding interaction: each pyramid level queries the language tokens
    through one multi-head cross-attention layer with a residual path from
    the projected visual tokens. Parameters are independent per level.
    '''

    # * method: declare (static)
    @staticmethod
    def declare(scope: ParamScope, config: ModelConfig) -> None:
        '''
        Declare per-level projections, plus cross-attention when enabled.
        '''

        for level, channels in zip(PYRAMID_LEVELS, config.vision_channels):
            level_scope = scope.scope(f'l{level}')
            TransformerLayers.declare_conv(level_scope, 'vis_proj', 1, channels, config.fusion_dim)
            if config.use_activation:
                TransformerLayers.declare_linear(level_scope, 'word_proj', config.text_dim, config.fusion_dim)
                MultiHeadAttention.declare(level_scope.scope('cross_attn'), config.fusion_dim)

    # * method: activate_scale (static)
    @staticmethod
    def activate_scale(
            f_v_i: Tensor,
            f_w: Tensor,
            padding_mask: np.ndarray,
            scope: ParamScope,
            heads: int,
            probe: Optional[AttentionProbe] = None,
            name: str = 'activation',
        ) -> Tensor:
        '''
        Activate one pyramid level with the language tokens.

        :param f_v_i: The visual map [h×w×C_v^i].
        :type f_v_i: Tensor
        :param f_w: The language tokens [l×C_t].
        :type f_w: Tensor
        :param padding_mask: Boolean [l], True at padding.
        :type padding_mask: np.ndarray
        :param scope: The level's parameters.
        :type scope: ParamScope
        :param heads: The attention head count.
        :type heads: int
        :param probe: Optional attention recorder.
        :type probe: AttentionProbe
        :param name: The record name.
        :type name: str
        :return: The activated map [h×w×D].
        :rtype: Tensor
        '''

        # Project both modalities to D and flatten the visual grid into tokens.
        visual = TransformerLayers.conv(f_v_i, scope, 'vis_proj')
        h, w, dim = visual.shape
        tokens = visual.reshape(h * w, dim)
        words = TransformerLayers.linear(f_w, scope, 'word_proj')

        # Vision queries words; residual keeps the visual signal.
        attended = MultiHeadAttention.attend(
            tokens, words, words, scope.scope('cross_attn'), heads,
            padding_mask, probe, f'{name}.cross_attn',
        )
        return (tokens + attended).reshape(h, w, dim)

    # * method: activate_pyramid (static)
    @staticmethod
    def activate_pyramid(
            pyramid: PyramidFeatures,
            f_w: Tensor,
            padding_mask: np.ndarray,
            scope: ParamScope,
            config: ModelConfig,
            probe: Optional[AttentionProbe] = None,
        ) -> ActivatedPyramid:
        '''
        Apply activate_scale to every level; with the module ablated, return
        the projected-only pyramid.

        :param pyramid: The visual pyramid.
        :type pyramid: PyramidFeatures
        :param f_w: The language tokens [l×C_t].
        :type f_w: Tensor
        :param padding_mask: Boolean [l], True at padding.
        :type padding_mask: np.ndarray
        :param scope: The module parameters.
        :type scope: ParamScope
        :param config: The model config.
        :type config: ModelConfig
        :param probe: Optional attention recorder.
        :type probe: AttentionProbe
        :return: The activated pyramid.
        :rtype: ActivatedPyramid
        '''

        levels = []
        for level, f_v_i in zip(PYRAMID_LEVELS, pyramid.levels):
            level_scope = scope.scope(f'l{level}')
            if config.use_activation:
                levels.append(ActivationModule.activate_scale(
                    f_v_i, f_w, padding_mask, level_scope, config.fusion_heads,
                    probe, f'activation.l{level}',
                ))
            else:
                levels.append(TransformerLayers.conv(f_v_i, level_scope, 'vis_proj'))
        return ActivatedPyramid(levels=levels)
