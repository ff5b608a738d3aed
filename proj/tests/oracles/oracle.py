#!/usr/bin/env python3
# Copyright 2026 The qbit Authors. All Rights Reserved.
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

"""Independent reference values for the C++ test suite.

Exact rational arithmetic where possible; numpy only for the naive
convolution / matrix oracles. `--write` refreshes expected.json, `--check`
compares against it.
"""
import argparse
import json
import math
import sys
from decimal import ROUND_HALF_EVEN, ROUND_HALF_UP, Decimal
from fractions import Fraction
from pathlib import Path


def round_half_away(x):
    return int(Decimal(repr(x)).quantize(Decimal(1), rounding=ROUND_HALF_UP))


def round_half_even(x):
    return int(Decimal(repr(x)).quantize(Decimal(1), rounding=ROUND_HALF_EVEN))


def binarize(xs):
    alpha = sum(Fraction(abs(x)).limit_denominator(10**6) for x in xs) / len(xs)
    signs = [1 if x >= 0 else -1 for x in xs]
    return alpha, signs


def quantize_unit(x, k, rnd=round_half_away):
    return rnd((2**k - 1) * x)


def quantize_weight_row(row, k):
    hat = [math.tanh(v) for v in row]
    m = max(abs(h) for h in hat)
    n = 2**k - 1
    codes = [round_half_away(n * (h / (2 * m) + 0.5)) for h in hat]
    return [2 * c - n for c in codes]


def pack(codes, k):
    nbytes = (len(codes) * k + 7) // 8
    out = bytearray(nbytes)
    for e, c in enumerate(codes):
        for b in range(k):
            if (c >> b) & 1:
                pos = e * k + b
                out[pos // 8] |= 1 << (pos % 8)
    return list(out)


def average(bits, counts):
    return Fraction(sum(b * n for b, n in zip(bits, counts)), sum(counts))


def round2(q):
    return float(Decimal(q.numerator) / Decimal(q.denominator)).__round__(10), str(
        (Decimal(q.numerator) / Decimal(q.denominator)).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


COUNTS = {
    "vgg7": ([3456, 147456, 294912, 589824, 1179648, 2359296, 8388608], [8, 4, 2, 1, 1, 1, 1]),
    "resnet20_421": ([13824, 51200, 204800], [4, 2, 1]),
    "resnet20_842": ([13824, 51200, 204800], [8, 4, 2]),
    "resnet18": ([147456, 524288, 2097152, 8388608], [8, 4, 2, 1]),
    "alexnet": ([307200, 884736, 663552, 442368, 37748736, 16777216], [8, 4, 2, 1, 1, 1]),
}


def compute():
    v = {}
    alpha, signs = binarize([0.5, -1.5, 2.0])
    v["binarize_alpha"] = [alpha.numerator, alpha.denominator]
    v["binarize_signs"] = signs
    v["binarize_zero_signs"] = binarize([0.0, 0.0])[1]
    v["unit_0.4_k2"] = quantize_unit(0.4, 2)
    v["unit_0.5_k1_away"] = quantize_unit(0.5, 1)
    v["unit_0.5_k1_even"] = quantize_unit(0.5, 1, round_half_even)
    v["weights_row_k2"] = quantize_weight_row([0.2, -0.5, 1.0], 2)
    v["weights_tanh"] = [round(math.tanh(x), 5) for x in [0.2, -0.5, 1.0]]
    v["weights_saturated_k1"] = quantize_weight_row([5.0, -5.0], 1)
    v["acts_k2"] = [quantize_unit(min(max(s, 0.0), 1.0), 2) for s in [-3.0, 0.5, 7.0]]
    v["acts_0.25_k8"] = quantize_unit(0.25, 8)
    v["pack_k2_0_3_2"] = pack([0, 3, 2], 2)
    v["pack_k4_15_0"] = pack([15, 0], 4)
    v["pack_k8_255"] = pack([255], 8)
    v["pack_k3_random"] = pack([5, 0, 7, 1, 2, 6, 3, 4, 1], 3)
    for name, (counts, bits) in COUNTS.items():
        avg = average(bits, counts)
        raw, rounded = round2(avg)
        v["avg_" + name] = {"num": avg.numerator, "den": avg.denominator, "raw": raw,
                            "rounded": rounded}
        sav = 1 - avg / 2
        v["savings_vs2_" + name] = round(float(sav), 10)
    v["lr_sequence"] = [0.1 * 0.1**sum(1 for m in [80, 120, 160] if m <= e)
                        for e in [0, 79, 80, 119, 120, 159, 160, 199]]
    return v


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--write", type=Path)
    ap.add_argument("--check", type=Path)
    args = ap.parse_args()
    values = compute()
    text = json.dumps(values, indent=1, sort_keys=True) + "\n"
    if args.write:
        args.write.write_text(text)
    if args.check:
        frozen = json.loads(args.check.read_text())
        if frozen != json.loads(text):
            diff = [k for k in set(frozen) | set(values) if frozen.get(k) != values.get(k)]
            print("oracle drift:", ", ".join(sorted(diff)))
            return 1
        print(f"oracle matches {len(values)} frozen values")
    if not (args.write or args.check):
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
