# *** imports

# ** core
from dataclasses import dataclass
from typing import Optional

# ** infra
import numpy as np

# ** app
from .activation import ActivatedPyramid, ActivationModule
from .attention import AttentionProbe
from .config import ModelConfig
from .l2v import L2VDecoder, UpdatedSentenceEmbedding
from .mask import DEFAULT_THRESHOLD, MaskHead
from .params import ParameterStore
from .tensor import Tensor
from .text import TextEncoder, TextFeatures, TokenSequence, Vocabulary
from .v2l import AlignedVisualMap, V2LDecoder
from .vision import PyramidFeatures, VisionEncoder


# *** models

# ** model: forward_result
@dataclass
class ForwardResult:
    '''
    Intermediate and final outputs of one forward pass.
    '''

    text: TextFeatures
    pyramid: PyramidFeatures
    activated: ActivatedPyramid
    aligned: AlignedVisualMap
    sentence: UpdatedSentenceEmbedding
    logits: Tensor


# ** model: loss_result
@dataclass
class LossResult:
    '''
    Weighted total loss and its terms.
    '''

    total: Tensor
    bce: Tensor
    dice: Tensor
    logits: Tensor


# *** utils

# ** util: fan_model
class FanModel:
    '''
    The assembled network: text and vision encoders, Activation Module,
    V2L decoder, L2V decoder and similarity mask head over one parameter store.
    '''

    # * init
    def __init__(self, config: ModelConfig, vocab: Vocabulary, seed: int = 0):
        '''
        :param config: The model config.
        :type config: ModelConfig
        :param vocab: The token vocabulary.
        :type vocab: Vocabulary
        :param seed: The root seed for parameter initialization.
        :type seed: int
        '''

        self.config = config.validate()
        self.vocab = vocab
        self.seed = seed
        self.params = ParameterStore(seed)
        TextEncoder.declare(self.params.scope('text'), config, len(vocab))
        VisionEncoder.declare(self.params.scope('vision'), config)
        ActivationModule.declare(self.params.scope('activation'), config)
        V2LDecoder.declare(self.params.scope('v2l'), config)
        L2VDecoder.declare(self.params.scope('l2v'), config)
        MaskHead.declare(self.params.scope('head'))

    # * method: tokenize
    def tokenize(self, text: str) -> TokenSequence:
        return TextEncoder.tokenize(text, self.vocab, self.config.max_len)

    # * method: forward
    def forward(
            self,
            image: np.ndarray,
            tokens: TokenSequence,
            probe: Optional[AttentionProbe] = None,
        ) -> ForwardResult:
        '''
        Run the network from pixels and tokens to stride-4 logits.

        :param image: Pixels [H×W×3] in [0, 1].
        :type image: np.ndarray
        :param tokens: The token sequence.
        :type tokens: TokenSequence
        :param probe: Optional attention recorder.
        :type probe: AttentionProbe
        :return: The forward outputs.
        :rtype: ForwardResult
        '''

        config = self.config
        params = self.params

        text = TextEncoder.encode_text(tokens, params.scope('text'), config, probe)
        pyramid = VisionEncoder.encode_image(image, params.scope('vision'), config)

        # Sentence granularity swaps the word sequence for f_s as the only language token.
        if config.text_granularity == 'sentence':
            words, word_mask = text.f_s, np.zeros(1, dtype=bool)
        else:
            words, word_mask = text.f_w, text.padding_mask

        activated = ActivationModule.activate_pyramid(
            pyramid, words, word_mask, params.scope('activation'), config, probe,
        )
        aligned = V2LDecoder.decode(activated, words, word_mask, params.scope('v2l'), config, probe)

        # L2V memory is the flattened activated top level.
        if config.use_l2v:
            top = activated.levels[-1]
            h, w, dim = top.shape
            sentence = L2VDecoder.l2v_decode(
                text.f_s, top.reshape(h * w, dim), params.scope('l2v'), config, probe,
            )
        else:
            sentence = L2VDecoder.project_sentence(text.f_s, params.scope('l2v'))

        logits = MaskHead.similarity_mask(aligned.features, sentence.f_s_prime, params.scope('head'))
        return ForwardResult(
            text=text,
            pyramid=pyramid,
            activated=activated,
            aligned=aligned,
            sentence=sentence,
            logits=logits,
        )

    # * method: loss
    def loss(
            self,
            image: np.ndarray,
            tokens: TokenSequence,
            gt_mask: np.ndarray,
            bce_weight: float = 1.0,
            dice_weight: float = 1.0,
            dice_smooth: float = 1.0,
        ) -> LossResult:
        '''
        Weighted BCE + Dice at stride 4 against the downsampled ground truth.
        '''

        logits = self.forward(image, tokens).logits
        target = MaskHead.downsample_mask(gt_mask)
        bce = MaskHead.bce_loss(logits, target)
        dice = MaskHead.dice_loss(logits, target, dice_smooth)
        total = bce * bce_weight + dice * dice_weight
        return LossResult(total=total, bce=bce, dice=dice, logits=logits)

    # * method: predict_logits
    def predict_logits(self, image: np.ndarray, tokens: TokenSequence) -> np.ndarray:
        '''
        Full-resolution logits via bilinear upsampling of the stride-4 logits.
        '''

        logits = self.forward(image, tokens).logits
        height, width = np.shape(image)[:2]
        return MaskHead.upsample_logits(logits.detach(), height, width).data

    # * method: predict_mask
    def predict_mask(self, image: np.ndarray, tokens: TokenSequence, threshold: float = DEFAULT_THRESHOLD) -> np.ndarray:
        return MaskHead.binarize(self.predict_logits(image, tokens), threshold)
