# *** imports

# ** core
from typing import Callable, Dict, List, Tuple

# ** infra
import numpy as np
from tiferet.events import RaiseError

# ** app
from .activation import ActivatedPyramid, ActivationModule
from .attention import MultiHeadAttention
from .config import ConfigLoader, ModelConfig
from .gradcheck import GradCheckReport, GradientChecker
from .l2v import L2VDecoder
from .mask import MaskHead
from .model import FanModel
from .params import ParameterStore, SeedStreams
from .tensor import Tensor, TensorOps
from .text import TextEncoder, TokenSequence, Vocabulary
from .v2l import V2LDecoder
from .vision import PYRAMID_LEVELS, VisionEncoder


# *** constants

# ** constant: default_trials
DEFAULT_TRIALS = 20

# ** constant: model_tensors_per_trial
MODEL_TENSORS_PER_TRIAL = 6

# ** constant: gradcheck_vocab
GRADCHECK_VOCAB = ('the', 'red', 'blue', 'circle', 'square', 'left', 'of')

# A case builds (scalar function, leaves to check) from a trial generator.
Case = Callable[[np.random.Generator], Tuple[Callable[[], Tensor], Dict[str, Tensor]]]


# *** helpers

# ** helper: leaf
def leaf(rng: np.random.Generator, *shape: int, low: float = None, high: float = None) -> Tensor:
    if low is not None:
        return Tensor(rng.uniform(low, high, size=shape), requires_grad=True)
    return Tensor(rng.normal(size=shape), requires_grad=True)


# ** helper: project
def project(out: Tensor, rng: np.random.Generator) -> Callable[[Tensor], Tensor]:
    '''
    Fix a random linear functional matching out's shape.
    '''

    weights = Tensor(rng.normal(size=out.shape))
    return lambda value: (value * weights).sum()


# ** helper: scalar_case
def scalar_case(build: Callable[[], Tensor], leaves: Dict[str, Tensor], rng: np.random.Generator):
    reduce = project(build(), rng)
    return (lambda: reduce(build())), leaves


# ** helper: randomize
def randomize(store: ParameterStore, rng: np.random.Generator, scale: float = 0.1) -> Dict[str, Tensor]:
    '''
    Jitter every parameter so zero-initialized biases and unit gains are off
    their special values, and return the store's leaves by name.
    '''

    for _, tensor in store.items():
        tensor.data += rng.normal(scale=scale, size=tensor.shape)
    return dict(store.items())


# ** helper: random_tokens
def random_tokens(rng: np.random.Generator, vocab_size: int, max_len: int) -> TokenSequence:
    words = int(rng.integers(1, max_len - 1))
    ids = [1] + rng.integers(4, vocab_size, size=words).tolist() + [2]
    true_length = len(ids)
    return TokenSequence(tuple(ids + [0] * (max_len - true_length)), true_length)


# *** utils

# ** util: grad_check_suites
class GradCheckSuites:
    '''
    Finite-difference suites, one per module, each running randomized trials
    of every differentiable operation the module owns.
    '''

    # * method: names (static)
    @staticmethod
    def names() -> List[str]:
        return list(GradCheckSuites.cases())

    # * method: config (static)
    @staticmethod
    def config() -> ModelConfig:
        return ConfigLoader.resolve('gradcheck').model

    # * method: cases (static)
    @staticmethod
    def cases() -> Dict[str, Dict[str, Case]]:
        return {
            'tensor': GradCheckSuites.tensor_cases(),
            'text': {'encode_text': GradCheckSuites.text_case},
            'vision': {'encode_image': GradCheckSuites.vision_case},
            'activation': {'activate_scale': GradCheckSuites.activation_case},
            'v2l': {
                'vision_projection': GradCheckSuites.projection_case,
                'decode': GradCheckSuites.v2l_case,
            },
            'l2v': {'l2v_decode': GradCheckSuites.l2v_case},
            'mask': {
                'similarity_mask': GradCheckSuites.similarity_case,
                'mask_losses': GradCheckSuites.loss_case,
            },
            'model': {'total_loss': GradCheckSuites.model_case},
        }

    # * method: tensor_cases (static)
    @staticmethod
    def tensor_cases() -> Dict[str, Case]:
        '''
        Primitive operations over small random operands.
        '''

        def unary(op, low=None, high=None, shape=(3, 4)):
            def case(rng):
                x = leaf(rng, *shape, low=low, high=high)
                return scalar_case(lambda: op(x), {'x': x}, rng)
            return case

        def binary(op, a_shape, b_shape, b_low=None, b_high=None):
            def case(rng):
                a = leaf(rng, *a_shape)
                b = leaf(rng, *b_shape, low=b_low, high=b_high)
                return scalar_case(lambda: op(a, b), {'a': a, 'b': b}, rng)
            return case

        def index_case(rng):
            x = leaf(rng, 5, 3)
            ids = np.array([0, 2, 2, 4])
            return scalar_case(lambda: x[ids], {'x': x}, rng)

        def concat_case(rng):
            a, b = leaf(rng, 2, 3), leaf(rng, 4, 3)
            return scalar_case(lambda: TensorOps.concat([a, b], axis=0), {'a': a, 'b': b}, rng)

        def layer_norm_case(rng):
            x, gamma, beta = leaf(rng, 4, 6), leaf(rng, 6), leaf(rng, 6)
            return scalar_case(lambda: TensorOps.layer_norm(x, gamma, beta), {'x': x, 'gamma': gamma, 'beta': beta}, rng)

        def conv_case(rng):
            x, kernel = leaf(rng, 6, 6, 2), leaf(rng, 3, 3, 2, 3)
            return scalar_case(lambda: TensorOps.conv2d(x, kernel, 2, 1), {'x': x, 'kernel': kernel}, rng)

        def bce_case(rng):
            logits = leaf(rng, 4, 4)
            target = (rng.random((4, 4)) < 0.5).astype(np.float64)
            return (lambda: TensorOps.bce_with_logits(logits, target)), {'logits': logits}

        def attention_case(rng):
            store = ParameterStore(int(rng.integers(1 << 30)))
            scope = store.scope('attn')
            MultiHeadAttention.declare(scope, 8)
            leaves = randomize(store, rng)
            query, memory = leaf(rng, 5, 8), leaf(rng, 4, 8)
            mask = np.array([False, False, True, False])
            leaves.update({'query': query, 'memory': memory})
            return scalar_case(lambda: MultiHeadAttention.attend(query, memory, memory, scope, 2, mask), leaves, rng)

        return {
            'add': binary(TensorOps.add, (3, 4), (4,)),
            'sub': binary(TensorOps.sub, (3, 4), (3, 1)),
            'mul': binary(TensorOps.mul, (2, 3), (2, 3)),
            'div': binary(TensorOps.div, (2, 3), (2, 3), 0.5, 2.0),
            'matmul': binary(TensorOps.matmul, (2, 3, 4), (2, 4, 5)),
            'exp': unary(TensorOps.exp),
            'log': unary(TensorOps.log, 0.5, 2.0),
            'sqrt': unary(TensorOps.sqrt, 0.5, 2.0),
            'sigmoid': unary(TensorOps.sigmoid),
            'gelu': unary(TensorOps.gelu),
            'sum': unary(lambda x: x.sum(axis=1)),
            'mean': unary(lambda x: x.mean(axis=0, keepdims=True)),
            'reshape_transpose': unary(lambda x: x.reshape(6, 4).transpose(), shape=(2, 3, 4)),
            'index': index_case,
            'concat': concat_case,
            'softmax': unary(lambda x: TensorOps.softmax(x, axis=-1), shape=(3, 5)),
            'layer_norm': layer_norm_case,
            'bilinear_upsample': unary(lambda x: TensorOps.bilinear_upsample(x, 8, 12), shape=(2, 3, 2)),
            'conv2d': conv_case,
            'bce_with_logits': bce_case,
            'multi_head_attention': attention_case,
        }

    # * method: text_case (static)
    @staticmethod
    def text_case(rng: np.random.Generator):
        config = GradCheckSuites.config()
        vocab = Vocabulary.from_words(GRADCHECK_VOCAB)
        store = ParameterStore(int(rng.integers(1 << 30)))
        scope = store.scope('text')
        TextEncoder.declare(scope, config, len(vocab))
        leaves = randomize(store, rng)
        tokens = random_tokens(rng, len(vocab), config.max_len)

        def build():
            features = TextEncoder.encode_text(tokens, scope, config)
            return TensorOps.concat([features.f_w, features.f_s], axis=0)

        return scalar_case(build, leaves, rng)

    # * method: vision_case (static)
    @staticmethod
    def vision_case(rng: np.random.Generator):
        config = GradCheckSuites.config()
        store = ParameterStore(int(rng.integers(1 << 30)))
        scope = store.scope('vision')
        VisionEncoder.declare(scope, config)
        leaves = randomize(store, rng)
        image = Tensor(rng.random((config.image_size, config.image_size, 3)), requires_grad=True)
        leaves['image'] = image

        pyramid = VisionEncoder.encode_image(image, scope, config)
        reducers = [project(level, rng) for level in pyramid.levels]

        def fn():
            levels = VisionEncoder.encode_image(image, scope, config).levels
            total = reducers[0](levels[0])
            for reduce, level in zip(reducers[1:], levels[1:]):
                total = total + reduce(level)
            return total

        return fn, leaves

    # * method: activation_case (static)
    @staticmethod
    def activation_case(rng: np.random.Generator):
        config = GradCheckSuites.config()
        store = ParameterStore(int(rng.integers(1 << 30)))
        scope = store.scope('activation')
        ActivationModule.declare(scope, config)
        level_scope = scope.scope(f'l{PYRAMID_LEVELS[1]}')
        leaves = randomize(store, rng)
        f_v = leaf(rng, 4, 4, config.vision_channels[1])
        f_w = leaf(rng, config.max_len, config.text_dim)
        mask = np.arange(config.max_len) >= config.max_len - 2
        leaves.update({'f_v': f_v, 'f_w': f_w})
        return scalar_case(
            lambda: ActivationModule.activate_scale(f_v, f_w, mask, level_scope, config.fusion_heads),
            leaves, rng,
        )

    # * method: projection_case (static)
    @staticmethod
    def projection_case(rng: np.random.Generator):
        config = GradCheckSuites.config()
        store = ParameterStore(int(rng.integers(1 << 30)))
        scope = store.scope('vpm')
        V2LDecoder.declare_projection(scope, config.fusion_dim, config.fusion_ffn, True)
        leaves = randomize(store, rng)
        f_c = leaf(rng, 2, 2, config.fusion_dim)
        words = leaf(rng, 4, config.fusion_dim)
        mask = np.array([False, False, False, True])
        leaves.update({'f_c': f_c, 'words': words})
        return scalar_case(
            lambda: V2LDecoder.vision_projection(f_c, words, mask, scope, config.fusion_heads, True, config.ln_eps),
            leaves, rng,
        )

    # * method: v2l_case (static)
    @staticmethod
    def v2l_case(rng: np.random.Generator):
        '''
        VPM on every level followed by the FPN chain.
        '''

        config = GradCheckSuites.config()
        store = ParameterStore(int(rng.integers(1 << 30)))
        scope = store.scope('v2l')
        V2LDecoder.declare(scope, config)
        leaves = randomize(store, rng)
        size = config.image_size // 4
        levels = [leaf(rng, size >> i, size >> i, config.fusion_dim) for i in range(len(PYRAMID_LEVELS))]
        f_w = leaf(rng, 3, config.text_dim)
        mask = np.array([False, False, True])
        leaves.update({f'level{level}': t for level, t in zip(PYRAMID_LEVELS, levels)})
        leaves['f_w'] = f_w

        return scalar_case(
            lambda: V2LDecoder.decode(ActivatedPyramid(levels), f_w, mask, scope, config).features,
            leaves, rng,
        )

    # * method: l2v_case (static)
    @staticmethod
    def l2v_case(rng: np.random.Generator):
        config = GradCheckSuites.config()
        store = ParameterStore(int(rng.integers(1 << 30)))
        scope = store.scope('l2v')
        L2VDecoder.declare(scope, config)
        leaves = randomize(store, rng)
        f_s = leaf(rng, 1, config.text_dim)
        memory = leaf(rng, 4, config.fusion_dim)
        leaves.update({'f_s': f_s, 'memory': memory})
        return scalar_case(
            lambda: L2VDecoder.l2v_decode(f_s, memory, scope, config).f_s_prime,
            leaves, rng,
        )

    # * method: similarity_case (static)
    @staticmethod
    def similarity_case(rng: np.random.Generator):
        store = ParameterStore(int(rng.integers(1 << 30)))
        scope = store.scope('head')
        MaskHead.declare(scope)
        leaves = randomize(store, rng)
        visual, sentence = leaf(rng, 2, 3, 8), leaf(rng, 1, 8)
        leaves.update({'visual': visual, 'sentence': sentence})
        return scalar_case(
            lambda: MaskHead.upsample_logits(MaskHead.similarity_mask(visual, sentence, scope), 8, 12),
            leaves, rng,
        )

    # * method: loss_case (static)
    @staticmethod
    def loss_case(rng: np.random.Generator):
        logits = leaf(rng, 4, 4)
        target = (rng.random((4, 4)) < 0.5).astype(np.float64)
        fn = lambda: MaskHead.bce_loss(logits, target) + MaskHead.dice_loss(logits, target)
        return fn, {'logits': logits}

    # * method: model_case (static)
    @staticmethod
    def model_case(rng: np.random.Generator):
        '''
        The weighted BCE + Dice loss through the whole network.
        '''

        config = GradCheckSuites.config()
        vocab = Vocabulary.from_words(GRADCHECK_VOCAB)
        model = FanModel(config, vocab, seed=int(rng.integers(1 << 30)))
        leaves = randomize(model.params, rng)
        size = config.image_size
        image = rng.random((size, size, 3))
        gt_mask = np.zeros((size, size))
        gt_mask[size // 4:size // 2, size // 4:3 * size // 4] = 1.0
        tokens = random_tokens(rng, len(vocab), config.max_len)
        return (lambda: model.loss(image, tokens, gt_mask).total), leaves

    # * method: deal (static)
    @staticmethod
    def deal(names: List[str], trials: int, trial: int, per_trial: int = MODEL_TENSORS_PER_TRIAL) -> List[str]:
        '''
        The tensor names one trial checks: consecutive, wrapping slices of
        at least per_trial names that together cover every name.

        :param names: The sorted tensor names.
        :type names: List[str]
        :param trials: The number of trials.
        :type trials: int
        :param trial: The trial index.
        :type trial: int
        :param per_trial: The smallest slice size.
        :type per_trial: int
        :return: The names for this trial.
        :rtype: List[str]
        '''

        if not names:
            return []
        size = min(len(names), max(per_trial, -(-len(names) // trials)))
        return [names[(trial * size + offset) % len(names)] for offset in range(size)]

    # * method: run (static)
    @staticmethod
    def run(suite: str, trials: int = DEFAULT_TRIALS, seed: int = 0) -> Dict[str, GradCheckReport]:
        '''
        Run every operation of one suite for the given number of trials.

        :param suite: The suite name.
        :type suite: str
        :param trials: Randomized trials per operation.
        :type trials: int
        :param seed: The root seed.
        :type seed: int
        :return: One merged report per operation.
        :rtype: Dict[str, GradCheckReport]
        '''

        cases = GradCheckSuites.cases()
        if suite not in cases:
            RaiseError.execute(
                error_code='UNKNOWN_SUITE',
                suite=suite,
                choices=', '.join(cases),
            )

        # The composite model case deals its tensors across trials so that
        # every parameter is checked at least once per run.
        composite = suite == 'model'
        samples = 1 if composite else 3

        reports = {}
        for op, case in cases[suite].items():
            report = GradCheckReport()
            for trial in range(trials):
                rng = SeedStreams.rng(seed, f'gradsuite/{suite}/{op}/{trial}')
                fn, leaves = case(rng)
                only = GradCheckSuites.deal(sorted(leaves), trials, trial) if composite else None
                report.merge(GradientChecker.check(
                    fn, leaves, samples=samples, seed=int(rng.integers(1 << 30)), only=only,
                ))
            reports[op] = report
        return reports
