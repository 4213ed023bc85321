# *** imports

# ** core
from dataclasses import dataclass
from typing import List, Optional

# ** infra
import numpy as np
from tiferet.events import RaiseError

# ** app
from .activation import ActivatedPyramid
from .attention import AttentionProbe, MultiHeadAttention
from .config import ModelConfig
from .layers import TransformerLayers
from .params import ParamScope
from .tensor import Tensor, TensorOps
from .vision import PYRAMID_LEVELS


# *** models

# ** model: aligned_visual_map
@dataclass
class AlignedVisualMap:
    '''
    The fused stride-4 multi-modal map [H/4×W/4×D].
    '''

    features: Tensor

    # * property: shape
    @property
    def shape(self):
        return self.features.shape


# *** utils

# ** util: v2l_decoder
class V2LDecoder:
    '''
    Vision-to-Language decoding: per-level Vision Projection Modules (VPM)
    inject word guidance, then a top-down FPN fuses level 5 down to level 2.
    '''

    # * method: positional_embedding (static)
    @staticmethod
    def positional_embedding(h: int, w: int, dim: int) -> np.ndarray:
        '''
        Fixed 2D sine/cosine table [h·w×D], row-major over (y, x). Each quarter
        of the channels holds sin(y), cos(y), sin(x), cos(x) in that order.

        :param h: The grid height.
        :type h: int
        :param w: The grid width.
        :type w: int
        :param dim: The embedding width, divisible by 4.
        :type dim: int
        :return: The embedding table.
        :rtype: np.ndarray
        '''

        if dim <= 0 or dim % 4 != 0:
            RaiseError.execute(
                error_code='INVALID_CONFIG',
                field='fusion_dim',
                reason=f'2D positional embedding needs a multiple of 4, got {dim}',
            )

        quarter = dim // 4
        freqs = 1.0 / (10000.0 ** (np.arange(quarter, dtype=np.float64) / quarter))
        ys, xs = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing='ij')
        y_angles = ys.reshape(-1, 1) * freqs
        x_angles = xs.reshape(-1, 1) * freqs
        return np.concatenate([np.sin(y_angles), np.cos(y_angles), np.sin(x_angles), np.cos(x_angles)], axis=1)

    # * method: declare_projection (static)
    @staticmethod
    def declare_projection(scope: ParamScope, dim: int, hidden: int, self_attention: bool) -> None:
        '''
        Declare one VPM: optional joint self-attention, cross-attention and FFN.
        '''

        if self_attention:
            TransformerLayers.declare_norm(scope, 'ln_self', dim)
            MultiHeadAttention.declare(scope.scope('self_attn'), dim)
        TransformerLayers.declare_norm(scope, 'ln_cross', dim)
        MultiHeadAttention.declare(scope.scope('cross_attn'), dim)
        TransformerLayers.declare_norm(scope, 'ln_ffn', dim)
        TransformerLayers.declare_feed_forward(scope.scope('ffn'), dim, hidden)

    # * method: declare (static)
    @staticmethod
    def declare(scope: ParamScope, config: ModelConfig) -> None:
        '''
        Declare the shared word projection, the VPMs active under vpm_mode,
        and the FPN smoothing convolutions.
        '''

        dim = config.fusion_dim
        levels = V2LDecoder.projected_levels(config)
        if levels:
            TransformerLayers.declare_linear(scope, 'word_proj', config.text_dim, dim)
        for level in levels:
            V2LDecoder.declare_projection(scope.scope(f'vpm{level}'), dim, config.fusion_ffn, config.vpm_self_attention)
        for level in PYRAMID_LEVELS[:-1]:
            TransformerLayers.declare_conv(scope, f'smooth{level}', 3, dim, dim)

    # * method: projected_levels (static)
    @staticmethod
    def projected_levels(config: ModelConfig) -> List[int]:
        if config.vpm_mode == 'multi':
            return list(PYRAMID_LEVELS)
        if config.vpm_mode == 'single':
            return [PYRAMID_LEVELS[-1]]
        return []

    # * method: vision_projection (static)
    @staticmethod
    def vision_projection(
            f_c_i: Tensor,
            f_w_proj: Tensor,
            padding_mask: np.ndarray,
            scope: ParamScope,
            heads: int,
            self_attention: bool = True,
            eps: float = 1e-5,
            probe: Optional[AttentionProbe] = None,
            name: str = 'vpm',
        ) -> Tensor:
        '''
        Inject word guidance into one activated level.

        :param f_c_i: The activated map [h×w×D].
        :type f_c_i: Tensor
        :param f_w_proj: Projected word tokens [l×D].
        :type f_w_proj: Tensor
        :param padding_mask: Boolean [l], True at padding.
        :type padding_mask: np.ndarray
        :param scope: The VPM parameters.
        :type scope: ParamScope
        :param heads: The attention head count.
        :type heads: int
        :param self_attention: Run the joint self-attention sublayer.
        :type self_attention: bool
        :param eps: The layer norm epsilon.
        :type eps: float
        :param probe: Optional attention recorder.
        :type probe: AttentionProbe
        :param name: The record name.
        :type name: str
        :return: The projected map [h×w×D].
        :rtype: Tensor
        '''

        h, w, dim = f_c_i.shape
        if f_w_proj.ndim != 2 or f_w_proj.shape[1] != dim:
            RaiseError.execute(
                error_code='SHAPE_MISMATCH',
                operation='vision_projection',
                left=f'visual {f_c_i.shape}',
                right=f'words {f_w_proj.shape}',
            )

        # Flattened vision tokens carry the 2D positions; words do not.
        vision = f_c_i.reshape(h * w, dim) + Tensor(V2LDecoder.positional_embedding(h, w, dim))
        word_mask = np.asarray(padding_mask, dtype=bool)

        # Joint self-attention over vision and word tokens, then keep vision only.
        if self_attention:
            tokens = TensorOps.concat([vision, f_w_proj], axis=0)
            joint_mask = np.concatenate([np.zeros(h * w, dtype=bool), word_mask])
            normed = TransformerLayers.norm(tokens, scope, 'ln_self', eps)
            tokens = tokens + MultiHeadAttention.attend(
                normed, normed, normed, scope.scope('self_attn'), heads,
                joint_mask, probe, f'{name}.self_attn',
            )
            vision = tokens[:h * w]

        # Cross-attention from vision to words, then FFN.
        normed = TransformerLayers.norm(vision, scope, 'ln_cross', eps)
        vision = vision + MultiHeadAttention.attend(
            normed, f_w_proj, f_w_proj, scope.scope('cross_attn'), heads,
            word_mask, probe, f'{name}.cross_attn',
        )
        vision = vision + TransformerLayers.feed_forward(
            TransformerLayers.norm(vision, scope, 'ln_ffn', eps), scope.scope('ffn'),
        )
        return vision.reshape(h, w, dim)

    # * method: fpn_fuse (static)
    @staticmethod
    def fpn_fuse(levels: List[Tensor], scope: ParamScope) -> AlignedVisualMap:
        '''
        Top-down fusion: upsample ×2, add the next lower level, smooth with a
        3×3 conv; repeat from level 5 to level 2.

        :param levels: Four maps ordered level 2..5, channel D.
        :type levels: List[Tensor]
        :param scope: The decoder parameters holding smooth{4,3,2}.
        :type scope: ParamScope
        :return: The fused level-2 map.
        :rtype: AlignedVisualMap
        '''

        if len(levels) != len(PYRAMID_LEVELS):
            RaiseError.execute(
                error_code='SHAPE_MISMATCH',
                operation='fpn_fuse',
                left=f'{len(levels)} levels',
                right=f'{len(PYRAMID_LEVELS)} levels',
            )

        fused = levels[-1]
        for level, lower in zip(reversed(PYRAMID_LEVELS[:-1]), reversed(levels[:-1])):
            h, w, dim = fused.shape
            if lower.shape != (2 * h, 2 * w, dim):
                RaiseError.execute(
                    error_code='SHAPE_MISMATCH',
                    operation='fpn_fuse',
                    left=f'level {level + 1} {fused.shape}',
                    right=f'level {level} {lower.shape}',
                )
            upsampled = TensorOps.bilinear_upsample(fused, 2 * h, 2 * w)
            fused = TransformerLayers.conv(upsampled + lower, scope, f'smooth{level}', padding=1)
        return AlignedVisualMap(features=fused)

    # * method: decode (static)
    @staticmethod
    def decode(
            pyramid: ActivatedPyramid,
            f_w: Tensor,
            padding_mask: np.ndarray,
            scope: ParamScope,
            config: ModelConfig,
            probe: Optional[AttentionProbe] = None,
        ) -> AlignedVisualMap:
        '''
        Apply the VPMs selected by vpm_mode, then fuse.

        :param pyramid: The activated pyramid.
        :type pyramid: ActivatedPyramid
        :param f_w: The language tokens [l×C_t].
        :type f_w: Tensor
        :param padding_mask: Boolean [l], True at padding.
        :type padding_mask: np.ndarray
        :param scope: The decoder parameters.
        :type scope: ParamScope
        :param config: The model config.
        :type config: ModelConfig
        :param probe: Optional attention recorder.
        :type probe: AttentionProbe
        :return: The aligned visual map.
        :rtype: AlignedVisualMap
        '''

        projected = V2LDecoder.projected_levels(config)
        words = TransformerLayers.linear(f_w, scope, 'word_proj') if projected else None

        levels = []
        for level, f_c_i in zip(PYRAMID_LEVELS, pyramid.levels):
            if level in projected:
                f_c_i = V2LDecoder.vision_projection(
                    f_c_i, words, padding_mask, scope.scope(f'vpm{level}'),
                    config.fusion_heads, config.vpm_self_attention, config.ln_eps,
                    probe, f'v2l.vpm{level}',
                )
            levels.append(f_c_i)
        return V2LDecoder.fpn_fuse(levels, scope)
