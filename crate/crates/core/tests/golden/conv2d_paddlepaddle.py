# opfuzz test case 1daab67b2cb18145b13a887e64a43b33: Conv2d (f32)
import os
import sys

import paddle

SEED = 497727099
DEVICE = "gpu" if os.environ.get("OPFUZZ_DEVICE", "gpu") == "gpu" else "cpu"
DTYPE = "float32"
EXPECTED = (1, 16, 126, 126)


def make(shape):
    if DTYPE.startswith("float"):
        return paddle.randn(shape, dtype=DTYPE)
    return paddle.randint(-8, 8, shape, dtype=DTYPE)


def run():
    paddle.set_device(DEVICE)
    paddle.seed(SEED)
    if DTYPE.startswith("float"):
        paddle.set_default_dtype(DTYPE)
    x = make([1, 3, 128, 128])
    op = paddle.nn.Conv2D(in_channels=3, out_channels=16, kernel_size=[5, 5], stride=[1, 1], padding=[1, 1], dilation=[1, 1], groups=1)
    y = op(x)
    if DEVICE == "gpu":
        paddle.device.cuda.synchronize()
    return y


def main():
    try:
        y = run()
        shape = tuple(y.shape)
        if shape != EXPECTED:
            raise AssertionError(f"output shape {shape}, expected {EXPECTED}")
    except Exception as e:
        print(f"EXCEPTION:{type(e).__name__}", flush=True)
        return 1
    print("OK", flush=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())
