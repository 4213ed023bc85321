# *** imports

# ** core
from typing import Optional

# ** infra
import numpy as np

# ** app
from .attention import AttentionProbe, MultiHeadAttention
from .params import ParamScope
from .tensor import Tensor, TensorOps


# *** utils

# ** util: transformer_layers
class TransformerLayers:
    '''
    Building blocks shared by the text encoder, the Vision Projection Module
    and the Language-to-Vision decoder: linear maps, layer norms, GELU
    feed-forward networks, and pre-norm encoder/decoder layers.
    '''

    # * method: declare_linear (static)
    @staticmethod
    def declare_linear(scope: ParamScope, key: str, in_dim: int, out_dim: int) -> None:
        scope.create(f'{key}.w', (in_dim, out_dim), init='normal')
        scope.create(f'{key}.b', (out_dim,), init='zeros')

    # * method: linear (static)
    @staticmethod
    def linear(x: Tensor, scope: ParamScope, key: str) -> Tensor:
        return x @ scope[f'{key}.w'] + scope[f'{key}.b']

    # * method: declare_norm (static)
    @staticmethod
    def declare_norm(scope: ParamScope, key: str, dim: int) -> None:
        scope.create(f'{key}.gamma', (dim,), init='ones')
        scope.create(f'{key}.beta', (dim,), init='zeros')

    # * method: norm (static)
    @staticmethod
    def norm(x: Tensor, scope: ParamScope, key: str, eps: float) -> Tensor:
        return TensorOps.layer_norm(x, scope[f'{key}.gamma'], scope[f'{key}.beta'], eps)

    # * method: declare_conv (static)
    @staticmethod
    def declare_conv(scope: ParamScope, key: str, size: int, in_dim: int, out_dim: int) -> None:
        scope.create(f'{key}.kernel', (size, size, in_dim, out_dim), init='kaiming')
        scope.create(f'{key}.bias', (out_dim,), init='zeros')

    # * method: conv (static)
    @staticmethod
    def conv(x: Tensor, scope: ParamScope, key: str, stride: int = 1, padding: int = 0) -> Tensor:
        return TensorOps.conv2d(x, scope[f'{key}.kernel'], stride, padding) + scope[f'{key}.bias']

    # * method: declare_feed_forward (static)
    @staticmethod
    def declare_feed_forward(scope: ParamScope, dim: int, hidden: int) -> None:
        TransformerLayers.declare_linear(scope, 'fc1', dim, hidden)
        TransformerLayers.declare_linear(scope, 'fc2', hidden, dim)

    # * method: feed_forward (static)
    @staticmethod
    def feed_forward(x: Tensor, scope: ParamScope) -> Tensor:
        hidden = TensorOps.gelu(TransformerLayers.linear(x, scope, 'fc1'))
        return TransformerLayers.linear(hidden, scope, 'fc2')

    # * method: declare_encoder_layer (static)
    @staticmethod
    def declare_encoder_layer(scope: ParamScope, dim: int, hidden: int) -> None:
        '''
        Declare a pre-norm self-attention + FFN layer.
        '''

        TransformerLayers.declare_norm(scope, 'ln_attn', dim)
        MultiHeadAttention.declare(scope.scope('self_attn'), dim)
        TransformerLayers.declare_norm(scope, 'ln_ffn', dim)
        TransformerLayers.declare_feed_forward(scope.scope('ffn'), dim, hidden)

    # * method: encoder_layer (static)
    @staticmethod
    def encoder_layer(
            x: Tensor,
            scope: ParamScope,
            heads: int,
            eps: float,
            key_padding_mask: Optional[np.ndarray] = None,
            probe: Optional[AttentionProbe] = None,
            name: str = 'encoder',
        ) -> Tensor:
        '''
        x ← x + SelfAttn(LN(x)); x ← x + FFN(LN(x)).
        '''

        normed = TransformerLayers.norm(x, scope, 'ln_attn', eps)
        x = x + MultiHeadAttention.attend(
            normed, normed, normed, scope.scope('self_attn'), heads,
            key_padding_mask, probe, f'{name}.self_attn',
        )
        return x + TransformerLayers.feed_forward(TransformerLayers.norm(x, scope, 'ln_ffn', eps), scope.scope('ffn'))

    # * method: declare_decoder_layer (static)
    @staticmethod
    def declare_decoder_layer(scope: ParamScope, dim: int, hidden: int) -> None:
        '''
        Declare a pre-norm self-attention + cross-attention + FFN layer.
        '''

        TransformerLayers.declare_norm(scope, 'ln_self', dim)
        MultiHeadAttention.declare(scope.scope('self_attn'), dim)
        TransformerLayers.declare_norm(scope, 'ln_cross', dim)
        MultiHeadAttention.declare(scope.scope('cross_attn'), dim)
        TransformerLayers.declare_norm(scope, 'ln_ffn', dim)
        TransformerLayers.declare_feed_forward(scope.scope('ffn'), dim, hidden)

    # * method: decoder_layer (static)
    @staticmethod
    def decoder_layer(
            query: Tensor,
            memory: Tensor,
            scope: ParamScope,
            heads: int,
            eps: float,
            memory_mask: Optional[np.ndarray] = None,
            probe: Optional[AttentionProbe] = None,
            name: str = 'decoder',
        ) -> Tensor:
        '''
        q ← q + SelfAttn(LN(q)); q ← q + CrossAttn(LN(q), memory); q ← q + FFN(LN(q)).
        '''

        normed = TransformerLayers.norm(query, scope, 'ln_self', eps)
        query = query + MultiHeadAttention.attend(
            normed, normed, normed, scope.scope('self_attn'), heads,
            None, probe, f'{name}.self_attn',
        )
        normed = TransformerLayers.norm(query, scope, 'ln_cross', eps)
        query = query + MultiHeadAttention.attend(
            normed, memory, memory, scope.scope('cross_attn'), heads,
            memory_mask, probe, f'{name}.cross_attn',
        )
        return query + TransformerLayers.feed_forward(
            TransformerLayers.norm(query, scope, 'ln_ffn', eps), scope.scope('ffn'),
        )
