# *** imports

# ** core
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

# ** infra
import numpy as np
from tiferet.events import RaiseError

# ** app
from .attention import AttentionProbe
from .config import ModelConfig
from .layers import TransformerLayers
from .params import ParamScope
from .tensor import Tensor


# *** constants

# ** constant: pad_token
PAD_TOKEN = '[PAD]'

# ** constant: sos_token
SOS_TOKEN = '[SOS]'

# ** constant: eos_token
EOS_TOKEN = '[EOS]'

# ** constant: unk_token
UNK_TOKEN = '[UNK]'

# ** constant: reserved_tokens
RESERVED_TOKENS = (PAD_TOKEN, SOS_TOKEN, EOS_TOKEN, UNK_TOKEN)


# *** models

# ** model: vocabulary
class Vocabulary:
    '''
    A dense token → id map whose first ids are the reserved tokens
    [PAD]=0, [SOS]=1, [EOS]=2, [UNK]=3.
    '''

    # * init
    def __init__(self, tokens: Sequence[str]):
        '''
        :param tokens: Every token in id order, reserved tokens first.
        :type tokens: Sequence[str]
        '''

        tokens = list(tokens)
        if tuple(tokens[:len(RESERVED_TOKENS)]) != RESERVED_TOKENS or len(set(tokens)) != len(tokens):
            RaiseError.execute(
                error_code='DATA_ERROR',
                file='vocabulary',
                reason='reserved tokens must lead and every token must be unique',
            )
        self.tokens: List[str] = tokens
        self.ids: Dict[str, int] = {token: i for i, token in enumerate(tokens)}

    # * method: from_words (static)
    @staticmethod
    def from_words(words: Sequence[str]) -> 'Vocabulary':
        ordered = [w for w in dict.fromkeys(words) if w not in RESERVED_TOKENS]
        return Vocabulary(list(RESERVED_TOKENS) + ordered)

    # * property: pad_id / sos_id / eos_id / unk_id
    @property
    def pad_id(self) -> int:
        return self.ids[PAD_TOKEN]

    @property
    def sos_id(self) -> int:
        return self.ids[SOS_TOKEN]

    @property
    def eos_id(self) -> int:
        return self.ids[EOS_TOKEN]

    @property
    def unk_id(self) -> int:
        return self.ids[UNK_TOKEN]

    # * method: __len__
    def __len__(self) -> int:
        return len(self.tokens)

    # * method: __contains__
    def __contains__(self, token: str) -> bool:
        return token in self.ids

    # * method: __eq__
    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.tokens == other.tokens

    # * method: id_of
    def id_of(self, token: str) -> int:
        return self.ids.get(token, self.unk_id)

    # * method: save
    def save(self, path: Path) -> Path:
        '''
        Write one token per line; the line number is the id.
        '''

        path = Path(path)
        path.write_text('\n'.join(self.tokens) + '\n', encoding='utf-8')
        return path

    # * method: load (static)
    @staticmethod
    def load(path: Path) -> 'Vocabulary':
        path = Path(path)
        if not path.is_file():
            RaiseError.execute(
                error_code='DATA_ERROR',
                file=str(path),
                reason='vocabulary file is missing',
            )
        return Vocabulary(path.read_text(encoding='utf-8').splitlines())


# ** model: token_sequence
@dataclass(frozen=True)
class TokenSequence:
    '''
    Exactly max_len ids: [SOS] words… [EOS] then [PAD] up to max_len.
    '''

    ids: Tuple[int, ...]
    true_length: int

    # * property: max_len
    @property
    def max_len(self) -> int:
        return len(self.ids)

    # * property: padding_mask
    @property
    def padding_mask(self) -> np.ndarray:
        return np.arange(len(self.ids)) >= self.true_length

    # * property: eos_index
    @property
    def eos_index(self) -> int:
        return self.true_length - 1


# ** model: text_features
@dataclass
class TextFeatures:
    '''
    Word embeddings f_w [max_len×C_t], sentence embedding f_s [1×C_t] and
    the padding mask (True at [PAD] positions).
    '''

    f_w: Tensor
    f_s: Tensor
    padding_mask: np.ndarray


# *** utils

# ** util: text_encoder
class TextEncoder:
    '''
    Whitespace tokenizer and small pre-norm transformer producing word and
    sentence embeddings.
    '''

    # * method: tokenize (static)
    @staticmethod
    def tokenize(text: str, vocab: Vocabulary, max_len: int) -> TokenSequence:
        '''
        Lowercase, split on whitespace, map unknown words to [UNK], keep the
        first max_len−2 words, wrap with [SOS]/[EOS], and pad.

        :param text: The referring expression.
        :type text: str
        :param vocab: The vocabulary.
        :type vocab: Vocabulary
        :param max_len: The fixed sequence length (≥ 3).
        :type max_len: int
        :return: The token sequence.
        :rtype: TokenSequence
        '''

        if max_len < 3:
            RaiseError.execute(
                error_code='INVALID_CONFIG',
                field='max_len',
                reason='must be at least 3',
            )

        words = text.lower().split()[:max_len - 2]
        ids = [vocab.sos_id] + [vocab.id_of(w) for w in words] + [vocab.eos_id]
        true_length = len(ids)
        ids += [vocab.pad_id] * (max_len - true_length)
        return TokenSequence(tuple(ids), true_length)

    # * method: sinusoidal_positions (static)
    @staticmethod
    def sinusoidal_positions(length: int, dim: int) -> np.ndarray:
        '''
        Fixed 1D sine/cosine position table [length×dim] (sin on even, cos on odd columns).
        '''

        positions = np.arange(length, dtype=np.float64)[:, None]
        freqs = 1.0 / (10000.0 ** (np.arange(0, dim, 2, dtype=np.float64) / dim))
        table = np.zeros((length, dim))
        table[:, 0::2] = np.sin(positions * freqs)
        table[:, 1::2] = np.cos(positions * freqs[:dim // 2])
        return table

    # * method: declare (static)
    @staticmethod
    def declare(scope: ParamScope, config: ModelConfig, vocab_size: int) -> None:
        '''
        Declare the token embedding table and the encoder layers.
        '''

        scope.create('embed', (vocab_size, config.text_dim), init='normal', std=1.0)
        for layer in range(config.text_layers):
            TransformerLayers.declare_encoder_layer(scope.scope(f'layer{layer}'), config.text_dim, config.text_ffn)
        TransformerLayers.declare_norm(scope, 'ln_final', config.text_dim)

    # * method: encode_text (static)
    @staticmethod
    def encode_text(
            tokens: TokenSequence,
            scope: ParamScope,
            config: ModelConfig,
            probe: Optional[AttentionProbe] = None,
        ) -> TextFeatures:
        '''
        Embed tokens, add positions, run the encoder layers under the padding
        mask; f_s is the final hidden state at the [EOS] position.

        :param tokens: The token sequence.
        :type tokens: TokenSequence
        :param scope: The encoder parameters.
        :type scope: ParamScope
        :param config: The model config.
        :type config: ModelConfig
        :param probe: Optional attention recorder.
        :type probe: AttentionProbe
        :return: The text features.
        :rtype: TextFeatures
        '''

        # Validate the ids against the embedding table.
        table = scope['embed']
        ids = np.asarray(tokens.ids, dtype=np.int64)
        if ids.min() < 0 or ids.max() >= table.shape[0]:
            RaiseError.execute(
                error_code='DATA_ERROR',
                file='token sequence',
                reason=f'token id outside vocabulary range [0, {table.shape[0]})',
            )
        if not 1 <= tokens.true_length <= len(ids):
            RaiseError.execute(
                error_code='DATA_ERROR',
                file='token sequence',
                reason=f'true_length {tokens.true_length} outside [1, {len(ids)}]',
            )

        # Token embedding plus fixed positions.
        mask = tokens.padding_mask
        hidden = table[ids] + Tensor(TextEncoder.sinusoidal_positions(len(ids), config.text_dim))

        # Encoder stack.
        for layer in range(config.text_layers):
            hidden = TransformerLayers.encoder_layer(
                hidden, scope.scope(f'layer{layer}'), config.text_heads, config.ln_eps,
                mask, probe, f'text.layer{layer}',
            )
        f_w = TransformerLayers.norm(hidden, scope, 'ln_final', config.ln_eps)
        f_s = f_w[tokens.eos_index:tokens.eos_index + 1]
        return TextFeatures(f_w=f_w, f_s=f_s, padding_mask=mask)
