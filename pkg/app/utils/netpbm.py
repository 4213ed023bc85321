# *** imports

# ** core
from pathlib import Path

# ** infra
import numpy as np
from PIL import Image, UnidentifiedImageError
from tiferet.events import RaiseError


# *** utils

# ** util: netpbm_codec
class NetpbmCodec:
    '''
    Binary PPM (P6) images and PGM (P5) masks through Pillow. Images are
    read as uint8 arrays; masks as boolean arrays.
    '''

    # * method: open (static)
    @staticmethod
    def open(path: Path, mode: str) -> Image.Image:
        path = Path(path)
        if not path.is_file():
            RaiseError.execute(
                error_code='DATA_ERROR',
                file=str(path),
                reason='file is missing',
            )
        try:
            with Image.open(path) as image:
                image.load()
                if image.mode != mode:
                    RaiseError.execute(
                        error_code='DATA_ERROR',
                        file=str(path),
                        reason=f'expected mode {mode}, found {image.mode}',
                    )
                return image.copy()
        except (OSError, UnidentifiedImageError) as exc:
            RaiseError.execute(
                error_code='DATA_ERROR',
                file=str(path),
                reason=str(exc),
            )

    # * method: write_ppm (static)
    @staticmethod
    def write_ppm(path: Path, pixels: np.ndarray) -> Path:
        '''
        Write an [H×W×3] image; float input in [0, 1] is scaled to bytes.

        :param path: The target file.
        :type path: Path
        :param pixels: uint8 or float pixels.
        :type pixels: np.ndarray
        :return: The written path.
        :rtype: Path
        '''

        pixels = np.asarray(pixels)
        if pixels.dtype != np.uint8:
            pixels = np.clip(np.rint(pixels * 255.0), 0, 255).astype(np.uint8)
        path = Path(path)
        Image.fromarray(pixels).save(path, format='PPM')
        return path

    # * method: read_ppm (static)
    @staticmethod
    def read_ppm(path: Path) -> np.ndarray:
        '''
        Read an RGB Netpbm image as uint8 [H×W×3].
        '''

        image = NetpbmCodec.open(path, 'RGB')
        return np.asarray(image, dtype=np.uint8).copy()

    # * method: write_pgm (static)
    @staticmethod
    def write_pgm(path: Path, mask: np.ndarray) -> Path:
        '''
        Write a binary mask as 0 (background) / 255 (foreground).
        '''

        values = np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8)
        path = Path(path)
        Image.fromarray(values).save(path, format='PPM')
        return path

    # * method: read_pgm (static)
    @staticmethod
    def read_pgm(path: Path) -> np.ndarray:
        '''
        Read a 0/255 grayscale mask as booleans; other levels are rejected.
        '''

        values = np.asarray(NetpbmCodec.open(path, 'L'), dtype=np.uint8)
        if not np.isin(values, (0, 255)).all():
            RaiseError.execute(
                error_code='DATA_ERROR',
                file=str(path),
                reason='mask values must be 0 or 255',
            )
        return values == 255
