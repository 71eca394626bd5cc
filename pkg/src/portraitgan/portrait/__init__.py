from .fft import fft, ifft
from .pgm import decode_pgm, encode_pgm, read_pgm, read_pgm_dir, write_pgm
from .transforms import (
    SIDE,
    Portrait,
    PortraitKind,
    cmr_portrait,
    cwt_morse_portrait,
    gram_matrix,
    gram_portrait,
    haar_portrait,
    haar_scalogram,
    hankel_matrix,
    hankel_portrait,
    make_portrait,
    morse_center_frequencies,
    morse_scalogram,
    portrait_matrix,
    quantize_to_gray,
    toeplitz_matrix,
    toeplitz_portrait,
)

__all__ = [
    "SIDE", "Portrait", "PortraitKind", "cmr_portrait", "cwt_morse_portrait", "decode_pgm",
    "encode_pgm", "fft", "gram_matrix", "gram_portrait", "haar_portrait", "haar_scalogram",
    "hankel_matrix", "hankel_portrait", "ifft", "make_portrait", "morse_center_frequencies",
    "morse_scalogram", "portrait_matrix", "quantize_to_gray", "read_pgm", "read_pgm_dir",
    "toeplitz_matrix", "toeplitz_portrait", "write_pgm",
]
