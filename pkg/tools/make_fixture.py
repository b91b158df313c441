"""Generate the 64x64 test crop with natural-image statistics.

Channels share a 1/f-amplitude luminance field plus small independent
chroma fields, yielding the smooth-with-edges texture typical of photos.
Deterministic: driven by the package's own counter-based stream. The PNG
committed under tests/data is the frozen output of this script.
"""

import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from doh.kernels import pyimpl  # noqa: E402
from doh.signals import ImageSignal, save_image  # noqa: E402

SIZE = 64


def spectrum_noise(seed: int, alpha: float) -> np.ndarray:
    """Real field with amplitude spectrum ~ 1/f^alpha, unit-normalized."""
    white = pyimpl.uniform_fill(seed, 0, SIZE * SIZE, 1.0).reshape(SIZE, SIZE)
    f = np.fft.fft2(white)
    fy = np.fft.fftfreq(SIZE)[:, None]
    fx = np.fft.fftfreq(SIZE)[None, :]
    radius = np.sqrt(fx * fx + fy * fy)
    radius[0, 0] = 1.0
    field = np.fft.ifft2(f / radius ** alpha).real
    field -= field.mean()
    return field / np.abs(field).max()


def main() -> None:
    luma = spectrum_noise(101, 1.2)
    edges = np.tanh(6.0 * spectrum_noise(202, 1.6))  # sharpened large structure
    base = 0.55 * luma + 0.45 * edges
    rgb = []
    for ch, seed in enumerate((303, 404, 505)):
        chroma = spectrum_noise(seed, 1.0)
        rgb.append(0.8 * base + 0.25 * chroma)
    img = np.stack(rgb, axis=2)
    img = 0.5 + 0.45 * img / np.abs(img).max()
    out = Path(__file__).resolve().parents[1] / "tests" / "data" / "crop64.png"
    out.parent.mkdir(parents=True, exist_ok=True)
    save_image(ImageSignal(np.clip(img, 0.0, 1.0)), out)
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
