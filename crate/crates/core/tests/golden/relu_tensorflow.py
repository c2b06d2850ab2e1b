# opfuzz test case e080aa679a30b632fc1e9dbedcf0dd46: ElemUnary (f32)
import os
import sys

import tensorflow as tf

SEED = 3766528615
DEVICE = "/GPU:0" if os.environ.get("OPFUZZ_DEVICE", "gpu") == "gpu" else "/CPU:0"
DTYPE = tf.float32
EXPECTED = (2, 3, 4)


def make(shape):
    if DTYPE.is_floating:
        return tf.random.normal(shape, dtype=DTYPE)
    return tf.random.uniform(shape, minval=-8, maxval=8, dtype=DTYPE)


def run():
    tf.random.set_seed(SEED)
    with tf.device(DEVICE):
        a = make((2, 3, 4))
        y = tf.nn.relu(a)
        tf.test.experimental.sync_devices()
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
