# *** imports

# ** core
import re
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

# ** infra
import numpy as np
from PIL import Image, ImageDraw
from tiferet.events import RaiseError

# ** app
from .params import SeedStreams
from .text import TextEncoder, TokenSequence, Vocabulary


# *** constants

# ** constant: shapes
SHAPES = ('circle', 'square', 'triangle')

# ** constant: colors
COLORS = {
    'red': (220, 40, 40),
    'green': (40, 170, 60),
    'blue': (40, 80, 220),
    'yellow': (230, 210, 40),
}

# ** constant: background
BACKGROUND = (128, 128, 128)

# ** constant: relations
RELATIONS = ('left of', 'right of', 'above', 'below')

# ** constant: expression_pattern
EXPRESSION_PATTERN = re.compile(
    r'^the (?P<color>\w+) (?P<shape>\w+)'
    r'(?: (?P<relation>left of|right of|above|below) the (?P<other_color>\w+) (?P<other_shape>\w+))?$'
)


# *** models

# ** model: scene_object
@dataclass(frozen=True)
class SceneObject:
    '''
    One filled shape: its attributes, integer centre (x, y) and half-size.
    '''

    shape: str
    color: str
    center: Tuple[int, int]
    size: int

    # * property: box
    @property
    def box(self) -> Tuple[int, int, int, int]:
        x, y = self.center
        return x - self.size, y - self.size, x + self.size, y + self.size

    # * method: overlaps
    def overlaps(self, other: 'SceneObject', gap: int = 1) -> bool:
        '''
        Bounding boxes closer than gap pixels count as overlapping.
        '''

        a, b = self.box, other.box
        return not (a[2] + gap < b[0] or b[2] + gap < a[0] or a[3] + gap < b[1] or b[3] + gap < a[1])

    # * method: to_dict
    def to_dict(self) -> Dict[str, Any]:
        return {'shape': self.shape, 'color': self.color, 'center': list(self.center), 'size': self.size}

    # * method: from_dict (static)
    @staticmethod
    def from_dict(data: Dict[str, Any]) -> 'SceneObject':
        return SceneObject(
            shape=data['shape'],
            color=data['color'],
            center=(int(data['center'][0]), int(data['center'][1])),
            size=int(data['size']),
        )


# ** model: scene_spec
@dataclass(frozen=True)
class SceneSpec:
    '''
    A laid-out scene and the index of its referent.
    '''

    objects: Tuple[SceneObject, ...]
    image_size: int
    seed: int
    referent: int

    # * method: to_dict
    def to_dict(self) -> Dict[str, Any]:
        return {
            'objects': [o.to_dict() for o in self.objects],
            'image_size': self.image_size,
            'seed': self.seed,
            'referent': self.referent,
        }

    # * method: from_dict (static)
    @staticmethod
    def from_dict(data: Dict[str, Any]) -> 'SceneSpec':
        return SceneSpec(
            objects=tuple(SceneObject.from_dict(o) for o in data['objects']),
            image_size=int(data['image_size']),
            seed=int(data['seed']),
            referent=int(data['referent']),
        )


# ** model: generation_config
@dataclass(frozen=True)
class GenerationConfig:
    '''
    Scene generation settings; defaults give 64×64 scenes of 2–4 objects.
    '''

    image_size: int = 64
    min_objects: int = 2
    max_objects: int = 4
    min_size: int = 6
    max_size: int = 11
    duplicate_rate: float = 0.35
    max_retries: int = 200
    max_len: int = 17

    # * method: validate
    def validate(self) -> 'GenerationConfig':
        checks = [
            (self.image_size > 0 and self.image_size % 32 == 0, 'image_size', 'must be a positive multiple of 32'),
            (1 <= self.min_objects <= self.max_objects <= 4, 'objects', 'need 1 <= min_objects <= max_objects <= 4'),
            (1 <= self.min_size <= self.max_size, 'size', 'need 1 <= min_size <= max_size'),
            (0.0 <= self.duplicate_rate <= 1.0, 'duplicate_rate', 'must lie in [0, 1]'),
            (self.max_retries >= 1, 'max_retries', 'must be at least 1'),
        ]
        for ok, name, reason in checks:
            if not ok:
                RaiseError.execute(
                    error_code='INVALID_CONFIG',
                    field=name,
                    reason=reason,
                )
        return self


# ** model: image_sample
@dataclass
class ImageSample:
    '''
    One referring-segmentation example.
    '''

    sample_id: str
    image: np.ndarray
    expression: str
    tokens: TokenSequence
    gt_mask: np.ndarray
    scene: Optional[SceneSpec] = None

    # * property: pixels
    @property
    def pixels(self) -> np.ndarray:
        '''
        The image as float64 in [0, 1].
        '''

        return self.image.astype(np.float64) / 255.0

    # * method: equals
    def equals(self, other: 'ImageSample') -> bool:
        return (
            self.sample_id == other.sample_id
            and self.expression == other.expression
            and self.tokens == other.tokens
            and self.scene == other.scene
            and self.image.dtype == other.image.dtype
            and np.array_equal(self.image, other.image)
            and np.array_equal(self.gt_mask, other.gt_mask)
        )


# *** utils

# ** util: scene_query
class SceneQuery:
    '''
    Evaluates a templated expression against a scene, independently of the
    generator that wrote it.
    '''

    # * method: satisfies (static)
    @staticmethod
    def satisfies(a: SceneObject, relation: str, b: SceneObject) -> bool:
        (ax, ay), (bx, by) = a.center, b.center
        return {
            'left of': ax < bx,
            'right of': ax > bx,
            'above': ay < by,
            'below': ay > by,
        }[relation]

    # * method: resolve (static)
    @staticmethod
    def resolve(objects: Sequence[SceneObject], expression: str) -> List[int]:
        '''
        Indices of the objects the expression describes.

        :param objects: The scene objects.
        :type objects: Sequence[SceneObject]
        :param expression: A templated expression.
        :type expression: str
        :return: Matching object indices (empty when the expression does not parse).
        :rtype: List[int]
        '''

        match = EXPRESSION_PATTERN.match(expression.strip())
        if match is None:
            return []

        candidates = [
            i for i, o in enumerate(objects)
            if o.color == match['color'] and o.shape == match['shape']
        ]
        if match['relation'] is None:
            return candidates

        landmarks = [
            o for o in objects
            if o.color == match['other_color'] and o.shape == match['other_shape']
        ]
        return [
            i for i in candidates
            if any(o is not objects[i] and SceneQuery.satisfies(objects[i], match['relation'], o) for o in landmarks)
        ]


# ** util: scene_generator
class SceneGenerator:
    '''
    Deterministic generator of shape scenes, templated expressions and exact
    referent masks.
    '''

    # * method: build_vocabulary (static)
    @staticmethod
    def build_vocabulary() -> Vocabulary:
        '''
        Every word any template can emit, in a fixed order.
        '''

        words = ['the'] + list(COLORS) + list(SHAPES)
        for relation in RELATIONS:
            words.extend(relation.split())
        return Vocabulary.from_words(words)

    # * method: render_mask (static)
    @staticmethod
    def render_mask(obj: SceneObject, image_size: int) -> np.ndarray:
        '''
        Rasterize one object's coverage without anti-aliasing.
        '''

        canvas = Image.new('L', (image_size, image_size), 0)
        draw = ImageDraw.Draw(canvas)
        x, y = obj.center
        r = obj.size
        if obj.shape == 'circle':
            draw.ellipse([x - r, y - r, x + r, y + r], fill=255)
        elif obj.shape == 'square':
            draw.rectangle([x - r, y - r, x + r - 1, y + r - 1], fill=255)
        else:
            draw.polygon([(x, y - r), (x - r, y + r - 1), (x + r - 1, y + r - 1)], fill=255)
        return np.asarray(canvas, dtype=np.uint8) > 0

    # * method: render (static)
    @staticmethod
    def render(objects: Sequence[SceneObject], image_size: int) -> Tuple[np.ndarray, List[np.ndarray]]:
        '''
        Paint the objects over the background.

        :return: The uint8 image and each object's coverage mask.
        :rtype: Tuple[np.ndarray, List[np.ndarray]]
        '''

        image = np.empty((image_size, image_size, 3), dtype=np.uint8)
        image[...] = BACKGROUND
        masks = []
        for obj in objects:
            mask = SceneGenerator.render_mask(obj, image_size)
            image[mask] = COLORS[obj.color]
            masks.append(mask)
        return image, masks

    # * method: place_objects (static)
    @staticmethod
    def place_objects(rng: np.random.Generator, config: GenerationConfig) -> Optional[List[SceneObject]]:
        '''
        Place non-overlapping objects; None when a placement runs out of retries.
        '''

        count = int(rng.integers(config.min_objects, config.max_objects + 1))
        objects: List[SceneObject] = []
        for index in range(count):
            # Later objects sometimes copy the first object's attributes.
            if index > 0 and rng.random() < config.duplicate_rate:
                shape, color = objects[0].shape, objects[0].color
            else:
                shape = SHAPES[int(rng.integers(len(SHAPES)))]
                color = list(COLORS)[int(rng.integers(len(COLORS)))]

            for _ in range(config.max_retries):
                size = int(rng.integers(config.min_size, config.max_size + 1))
                high = config.image_size - size - 1
                if high <= size:
                    return None
                center = (int(rng.integers(size, high + 1)), int(rng.integers(size, high + 1)))
                candidate = SceneObject(shape, color, center, size)
                if not any(candidate.overlaps(o) for o in objects):
                    objects.append(candidate)
                    break
            else:
                return None
        return objects

    # * method: describe (static)
    @staticmethod
    def describe(objects: Sequence[SceneObject], referent: int, rng: np.random.Generator) -> Optional[str]:
        '''
        Write an expression that singles out the referent: attribute-only when
        its colour and shape are unique, otherwise with a spatial relation to
        an attribute-unique landmark. None when no template is unambiguous.
        '''

        target = objects[referent]
        attributes = f'the {target.color} {target.shape}'
        if SceneQuery.resolve(objects, attributes) == [referent]:
            return attributes

        landmarks = [
            i for i, o in enumerate(objects)
            if i != referent and len(SceneQuery.resolve(objects, f'the {o.color} {o.shape}')) == 1
        ]
        options = [(i, relation) for i in landmarks for relation in RELATIONS]
        for choice in rng.permutation(len(options)):
            landmark, relation = options[int(choice)]
            other = objects[landmark]
            expression = f'{attributes} {relation} the {other.color} {other.shape}'
            if SceneQuery.resolve(objects, expression) == [referent]:
                return expression
        return None

    # * method: generate_sample (static)
    @staticmethod
    def generate_sample(
            seed: int,
            config: GenerationConfig = None,
            vocab: Vocabulary = None,
            sample_id: str = None,
        ) -> ImageSample:
        '''
        Generate one sample, fully determined by the seed.

        :param seed: The sample seed.
        :type seed: int
        :param config: The generation settings.
        :type config: GenerationConfig
        :param vocab: The vocabulary; defaults to the template vocabulary.
        :type vocab: Vocabulary
        :param sample_id: The sample id; defaults to the zero-padded seed.
        :type sample_id: str
        :return: The sample.
        :rtype: ImageSample
        '''

        config = (config or GenerationConfig()).validate()
        vocab = vocab or SceneGenerator.build_vocabulary()
        rng = SeedStreams.rng(seed, 'scene')

        for _ in range(config.max_retries):
            objects = SceneGenerator.place_objects(rng, config)
            if not objects:
                continue
            referent = int(rng.integers(len(objects)))
            expression = SceneGenerator.describe(objects, referent, rng)
            if expression is None:
                continue

            image, masks = SceneGenerator.render(objects, config.image_size)
            return ImageSample(
                sample_id=sample_id or f'{seed:08d}',
                image=image,
                expression=expression,
                tokens=TextEncoder.tokenize(expression, vocab, config.max_len),
                gt_mask=masks[referent],
                scene=SceneSpec(tuple(objects), config.image_size, seed, referent),
            )

        RaiseError.execute(
            error_code='GENERATION_FAILED',
            seed=seed,
            attempts=config.max_retries,
        )
