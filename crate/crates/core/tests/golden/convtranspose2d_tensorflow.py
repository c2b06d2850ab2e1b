# opfuzz test case 2fc8e55cca0e34ff99cd99603fa828ec: ConvTranspose2d (f32)
import os
import sys

import tensorflow as tf

SEED = 801695068
DEVICE = "/GPU:0" if os.environ.get("OPFUZZ_DEVICE", "gpu") == "gpu" else "/CPU:0"
DTYPE = tf.float32
EXPECTED = (1, 7999803, 203, 16)


def make(shape):
    if DTYPE.is_floating:
        return tf.random.normal(shape, dtype=DTYPE)
    return tf.random.uniform(shape, minval=-8, maxval=8, dtype=DTYPE)


def run():
    tf.random.set_seed(SEED)
    with tf.device(DEVICE):
        x = make((1, 40000, 2, 10))
        filters = 16
        kernel_size = (3, 3)
        strides = (200, 200)
        dilation_rate = (1, 1)
        output_padding = (0, 0)
        w = make(kernel_size + (filters, x.shape[-1]))
        y = tf.nn.conv_transpose(x, w, [1, 7999803, 203, 16], strides=(1, *strides, 1), padding="VALID", dilations=(1, *dilation_rate, 1))
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
