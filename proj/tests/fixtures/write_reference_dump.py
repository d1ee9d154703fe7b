# Copyright 2026 The edistill Authors. All Rights Reserved.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Writes a reference activation dump with numpy only.

Values follow closed-form formulas so a reader can regenerate them
independently:

  hidden layer i:   sin(0.1 (k+1) + 0.37 i + 0.013 (l D + j))
  attn-norm i:      cos(0.2 (k+1) + 0.41 i + 0.017 (l D + j))
  ffn-norm i:       sin(0.3 (k+1) - 0.29 i + 0.011 (l D + j)) * 2
  g_final[j]:       1 + 0.1 cos(j)
  W_u[j, v]:        0.2 sin(0.5 j + 0.3 v)

with k the sequence, l the token and j the channel.
"""

import struct
import sys

import numpy as np

D, N, VOCAB = 5, 2, 7
SEQ_LENS = [4, 6, 3]
EPS = 1e-5
LABEL = b"reference-numpy"


def grid(length):
    l = np.arange(length)[:, None]
    j = np.arange(D)[None, :]
    return (l * D + j).astype(np.float64)


def hidden(k, i, length):
    return np.sin(0.1 * (k + 1) + 0.37 * i + 0.013 * grid(length))


def attn_norm(k, i, length):
    return np.cos(0.2 * (k + 1) + 0.41 * i + 0.017 * grid(length))


def ffn_norm(k, i, length):
    return 2.0 * np.sin(0.3 * (k + 1) - 0.29 * i + 0.011 * grid(length))


def f32(a):
    return np.ascontiguousarray(a, dtype="<f4").tobytes()


def main(path):
    out = bytearray(b"EDAD")
    out += struct.pack("<IIII", 1, D, N, len(SEQ_LENS))
    out += struct.pack("<BB", 1, 1)
    out += struct.pack("<II", VOCAB, len(LABEL)) + LABEL
    for k, length in enumerate(SEQ_LENS):
        out += struct.pack("<I", length)
        for i in range(N + 1):
            out += f32(hidden(k, i, length))
        for i in range(1, N + 1):
            out += f32(attn_norm(k, i, length))
            out += f32(ffn_norm(k, i, length))
    j = np.arange(D)
    out += f32(1.0 + 0.1 * np.cos(j))
    out += struct.pack("<f", EPS)
    v = np.arange(VOCAB)
    out += f32(0.2 * np.sin(0.5 * j[:, None] + 0.3 * v[None, :]))
    with open(path, "wb") as fh:
        fh.write(out)


if __name__ == "__main__":
    main(sys.argv[1])
