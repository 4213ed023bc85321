# *** imports

# ** core
import math
from typing import Dict, List, Optional

# ** infra
import numpy as np
from tiferet.events import RaiseError

# ** app
from .params import ParamScope
from .tensor import Tensor, TensorOps


# *** constants

# ** constant: masked_logit
MASKED_LOGIT = -1e9


# *** classes

# ** class: attention_record
class AttentionRecord:
    '''
    One recorded attention call: per-head weights [heads×Lq×Lk] and the key
    padding mask that was applied (True = masked).
    '''

    # * init
    def __init__(self, name: str, weights: np.ndarray, key_padding_mask: np.ndarray):
        self.name = name
        self.weights = weights
        self.key_padding_mask = key_padding_mask

    # * method: row_sum_error
    def row_sum_error(self) -> float:
        '''
        Worst deviation of any attention row sum from 1.
        '''

        return float(np.abs(self.weights.sum(axis=-1) - 1.0).max())

    # * method: masked_weight
    def masked_weight(self) -> float:
        '''
        Largest weight assigned to any masked key (exactly 0 when masking holds).
        '''

        if not self.key_padding_mask.any():
            return 0.0
        return float(self.weights[..., self.key_padding_mask].max())


# ** class: attention_probe
class AttentionProbe:
    '''
    Collects attention weights from instrumented forward passes.
    '''

    # * init
    def __init__(self):
        self.records: List[AttentionRecord] = []

    # * method: record
    def record(self, name: str, weights: np.ndarray, key_padding_mask: np.ndarray) -> None:
        self.records.append(AttentionRecord(name, weights.copy(), key_padding_mask.copy()))

    # * method: names
    def names(self) -> List[str]:
        return [r.name for r in self.records]

    # * method: find
    def find(self, prefix: str) -> List[AttentionRecord]:
        return [r for r in self.records if r.name.startswith(prefix)]

    # * method: summary
    def summary(self) -> Dict[str, float]:
        '''
        Aggregate normalization diagnostics over every record.
        '''

        return dict(
            calls=float(len(self.records)),
            max_row_sum_error=max((r.row_sum_error() for r in self.records), default=0.0),
            max_masked_weight=max((r.masked_weight() for r in self.records), default=0.0),
        )


# *** utils

# ** util: multi_head_attention
class MultiHeadAttention:
    '''
    Scaled dot-product multi-head attention over token matrices, with input
    projections, key padding mask and output projection.
    '''

    # * method: declare (static)
    @staticmethod
    def declare(scope: ParamScope, dim: int) -> None:
        '''
        Declare the projection set (wq, bq, wk, bk, wv, bv, wo, bo).

        :param scope: The parameter scope.
        :type scope: ParamScope
        :param dim: The model dimension D.
        :type dim: int
        '''

        for key in ('q', 'k', 'v', 'o'):
            scope.create(f'w{key}', (dim, dim), init='normal')
            scope.create(f'b{key}', (dim,), init='zeros')

    # * method: attend (static)
    @staticmethod
    def attend(
            query: Tensor,
            key: Tensor,
            value: Tensor,
            scope: ParamScope,
            heads: int,
            key_padding_mask: Optional[np.ndarray] = None,
            probe: Optional[AttentionProbe] = None,
            name: str = 'attention',
        ) -> Tensor:
        '''
        Attend from query tokens [Lq×D] to key/value tokens [Lk×D].

        :param query: The query tokens.
        :type query: Tensor
        :param key: The key tokens.
        :type key: Tensor
        :param value: The value tokens.
        :type value: Tensor
        :param scope: The projection parameters.
        :type scope: ParamScope
        :param heads: The head count; must divide D.
        :type heads: int
        :param key_padding_mask: Boolean [Lk], True where a key is padding.
        :type key_padding_mask: np.ndarray
        :param probe: Optional recorder for the attention weights.
        :type probe: AttentionProbe
        :param name: The record name.
        :type name: str
        :return: The projected attention output [Lq×D].
        :rtype: Tensor
        '''

        # Validate dimensions.
        if query.ndim != 2 or key.ndim != 2 or value.ndim != 2:
            RaiseError.execute(
                error_code='SHAPE_MISMATCH',
                operation=name,
                left=f'query {query.shape}',
                right=f'key {key.shape}, value {value.shape} (tokens must be [L×D])',
            )
        l_q, dim = query.shape
        l_k = key.shape[0]
        if heads < 1 or dim % heads != 0:
            RaiseError.execute(
                error_code='INVALID_CONFIG',
                field='heads',
                reason=f'model dimension {dim} is not divisible by {heads} heads',
            )
        if key.shape[1] != dim or value.shape != key.shape or l_k == 0:
            RaiseError.execute(
                error_code='SHAPE_MISMATCH',
                operation=name,
                left=f'query {query.shape}',
                right=f'key {key.shape}, value {value.shape}',
            )

        # Validate the padding mask.
        mask = np.zeros(l_k, dtype=bool) if key_padding_mask is None else np.asarray(key_padding_mask, dtype=bool)
        if mask.shape != (l_k,):
            RaiseError.execute(
                error_code='SHAPE_MISMATCH',
                operation=name,
                left=f'keys {l_k}',
                right=f'mask {mask.shape}',
            )
        if mask.all():
            RaiseError.execute(
                error_code='DEGENERATE_MASK',
                operation=name,
                keys=l_k,
            )

        # Project and split into heads: [heads×L×head_dim].
        head_dim = dim // heads
        q = query @ scope['wq'] + scope['bq']
        k = key @ scope['wk'] + scope['bk']
        v = value @ scope['wv'] + scope['bv']
        q_heads = q.reshape(l_q, heads, head_dim).transpose(1, 0, 2)
        k_heads = k.reshape(l_k, heads, head_dim).transpose(1, 2, 0)
        v_heads = v.reshape(l_k, heads, head_dim).transpose(1, 0, 2)

        # Scaled scores with masked keys pushed to -1e9.
        scores = (q_heads @ k_heads) * (1.0 / math.sqrt(head_dim))
        if mask.any():
            scores = scores + Tensor(np.where(mask, MASKED_LOGIT, 0.0).reshape(1, 1, l_k))
        weights = TensorOps.softmax(scores, axis=-1)
        if probe is not None:
            probe.record(name, weights.data, mask)

        # Merge heads and apply the output projection.
        context = (weights @ v_heads).transpose(1, 0, 2).reshape(l_q, dim)
        return context @ scope['wo'] + scope['bo']
