# *** imports

# ** core
from dataclasses import dataclass
from typing import Optional

# ** infra
from tiferet.events import RaiseError

# ** app
from .attention import AttentionProbe
from .config import ModelConfig
from .layers import TransformerLayers
from .params import ParamScope
from .tensor import Tensor


# *** models

# ** model: updated_sentence_embedding
@dataclass
class UpdatedSentenceEmbedding:
    '''
    The content-aware sentence query f_s' [1×D].
    '''

    f_s_prime: Tensor


# *** utils

# ** util: l2v_decoder
class L2VDecoder:
    '''
    Language-to-Vision decoding: a stack of transformer decoder layers that
    updates the projected sentence embedding against visual memory.
    '''

    # * method: declare (static)
    @staticmethod
    def declare(scope: ParamScope, config: ModelConfig) -> None:
        '''
        Declare the sentence projection and, when enabled, the optional
        memory encoder layers and the decoder stack.
        '''

        dim = config.fusion_dim
        TransformerLayers.declare_linear(scope, 'sent_proj', config.text_dim, dim)
        if not config.use_l2v:
            return
        for layer in range(config.l2v_encoder_layers):
            TransformerLayers.declare_encoder_layer(scope.scope(f'enc{layer}'), dim, config.l2v_ffn)
        for layer in range(config.l2v_layers):
            TransformerLayers.declare_decoder_layer(scope.scope(f'dec{layer}'), dim, config.l2v_ffn)

    # * method: project_sentence (static)
    @staticmethod
    def project_sentence(f_s: Tensor, scope: ParamScope) -> UpdatedSentenceEmbedding:
        '''
        Project f_s into D without decoding.
        '''

        return UpdatedSentenceEmbedding(f_s_prime=TransformerLayers.linear(f_s, scope, 'sent_proj'))

    # * method: l2v_decode (static)
    @staticmethod
    def l2v_decode(
            f_s: Tensor,
            memory: Tensor,
            scope: ParamScope,
            config: ModelConfig,
            probe: Optional[AttentionProbe] = None,
        ) -> UpdatedSentenceEmbedding:
        '''
        Decode the sentence query against visual memory.

        :param f_s: The sentence embedding [1×C_t].
        :type f_s: Tensor
        :param memory: Visual memory tokens [M×D].
        :type memory: Tensor
        :param scope: The decoder parameters.
        :type scope: ParamScope
        :param config: The model config (l2v_layers, l2v_heads, l2v_encoder_layers).
        :type config: ModelConfig
        :param probe: Optional attention recorder.
        :type probe: AttentionProbe
        :return: The updated sentence embedding.
        :rtype: UpdatedSentenceEmbedding
        '''

        if config.l2v_layers < 1:
            RaiseError.execute(
                error_code='INVALID_CONFIG',
                field='l2v_layers',
                reason='must be at least 1',
            )
        if memory.ndim != 2 or memory.shape[0] == 0:
            RaiseError.execute(
                error_code='CONTRACT_VIOLATION',
                operation='l2v_decode',
                reason=f'visual memory must be a nonempty token matrix, got {memory.shape}',
            )

        query = L2VDecoder.project_sentence(f_s, scope).f_s_prime

        # Optional encoder layers over the memory.
        for layer in range(config.l2v_encoder_layers):
            memory = TransformerLayers.encoder_layer(
                memory, scope.scope(f'enc{layer}'), config.l2v_heads, config.ln_eps,
                None, probe, f'l2v.enc{layer}',
            )

        for layer in range(config.l2v_layers):
            query = TransformerLayers.decoder_layer(
                query, memory, scope.scope(f'dec{layer}'), config.l2v_heads, config.ln_eps,
                None, probe, f'l2v.dec{layer}',
            )
        return UpdatedSentenceEmbedding(f_s_prime=query)
