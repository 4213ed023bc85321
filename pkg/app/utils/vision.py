# *** imports

# ** core
from dataclasses import dataclass
from typing import List

# ** infra
import numpy as np
from tiferet.events import RaiseError

# ** app
from .config import ModelConfig
from .layers import TransformerLayers
from .params import BACKBONE_TAG, ParamScope
from .tensor import Tensor, TensorOps


# *** constants

# ** constant: pyramid_levels
PYRAMID_LEVELS = (2, 3, 4, 5)

# ** constant: image_divisor
IMAGE_DIVISOR = 32


# *** models

# ** model: pyramid_features
@dataclass
class PyramidFeatures:
    '''
    Feature maps f_v^2..f_v^5 at strides 4/8/16/32, stored in level order.
    '''

    levels: List[Tensor]

    # * method: level
    def level(self, index: int) -> Tensor:
        return self.levels[PYRAMID_LEVELS.index(index)]

    # * method: shapes
    def shapes(self) -> List[tuple]:
        return [t.shape for t in self.levels]


# *** utils

# ** util: vision_encoder
class VisionEncoder:
    '''
    A strided convolutional backbone: a stride-4 stem followed by three
    stride-2 stages, each conv followed by channel layer norm and GELU.
    '''

    # * method: declare (static)
    @staticmethod
    def declare(scope: ParamScope, config: ModelConfig) -> None:
        '''
        Declare backbone parameters, tagged 'backbone' for the lr schedule.
        '''

        scope = scope.tagged(BACKBONE_TAG)
        channels = config.vision_channels
        TransformerLayers.declare_conv(scope, 'stem', 4, 3, channels[0])
        TransformerLayers.declare_norm(scope, 'stem_norm', channels[0])
        for stage, (c_in, c_out) in enumerate(zip(channels[:-1], channels[1:]), start=3):
            TransformerLayers.declare_conv(scope, f'stage{stage}', 3, c_in, c_out)
            TransformerLayers.declare_norm(scope, f'stage{stage}_norm', c_out)

    # * method: check_image (static)
    @staticmethod
    def check_image(image: np.ndarray) -> None:
        '''
        Require an [H×W×3] image with H and W divisible by 32.
        '''

        shape = np.shape(image)
        if len(shape) != 3 or shape[2] != 3 or shape[0] % IMAGE_DIVISOR or shape[1] % IMAGE_DIVISOR or 0 in shape:
            RaiseError.execute(
                error_code='SHAPE_MISMATCH',
                operation='encode_image',
                left=str(shape),
                right=f'H and W divisible by {IMAGE_DIVISOR}, 3 channels',
            )

    # * method: encode_image (static)
    @staticmethod
    def encode_image(image, scope: ParamScope, config: ModelConfig) -> PyramidFeatures:
        '''
        Encode an image into the four-level pyramid.

        :param image: Pixels [H×W×3] in [0, 1] (array or Tensor).
        :type image: np.ndarray | Tensor
        :param scope: The backbone parameters.
        :type scope: ParamScope
        :param config: The model config.
        :type config: ModelConfig
        :return: The pyramid features.
        :rtype: PyramidFeatures
        '''

        x = image if isinstance(image, Tensor) else Tensor(image)
        VisionEncoder.check_image(x.data)

        # Stem: 4×4 stride-4 patchify conv.
        x = TransformerLayers.conv(x, scope, 'stem', stride=4)
        x = TensorOps.gelu(TransformerLayers.norm(x, scope, 'stem_norm', config.ln_eps))
        levels = [x]

        # Stages 3..5: 3×3 stride-2 convs.
        for stage in PYRAMID_LEVELS[1:]:
            x = TransformerLayers.conv(x, scope, f'stage{stage}', stride=2, padding=1)
            x = TensorOps.gelu(TransformerLayers.norm(x, scope, f'stage{stage}_norm', config.ln_eps))
            levels.append(x)

        return PyramidFeatures(levels=levels)
