# opfuzz test case e080aa679a30b632fc1e9dbedcf0dd46: ElemUnary (f32)
import os
import sys

import torch

SEED = 3766528615
DEVICE = "cuda" if os.environ.get("OPFUZZ_DEVICE", "gpu") == "gpu" else "cpu"
DTYPE = torch.float32
EXPECTED = (2, 3, 4)


def make(shape):
    if DTYPE.is_floating_point:
        return torch.randn(shape, dtype=DTYPE, device=DEVICE)
    return torch.randint(-8, 8, shape, dtype=DTYPE, device=DEVICE)


def run():
    torch.manual_seed(SEED)
    a = make((2, 3, 4))
    y = torch.relu(a)
    if DEVICE == "cuda":
        torch.cuda.synchronize()
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
