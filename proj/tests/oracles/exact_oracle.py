# Copyright 2026 The relaxsd Authors.
# SPDX-License-Identifier: Apache-2.0
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

"""Exact rational reference values for the hand-written V=2 fixture in test_exact.cpp.

Enumerates every event of one drafting round (draft tuple, accept/reject coins,
correction or bonus token, target continuation) with Fractions.
"""
from fractions import Fraction as F
from itertools import product

P = {(): [F(3, 5), F(2, 5)], (0,): [F(1, 2), F(1, 2)], (1,): [F(1, 5), F(4, 5)],
     (0, 0): [F(7, 10), F(3, 10)], (0, 1): [F(1, 4), F(3, 4)],
     (1, 0): [F(1, 3), F(2, 3)], (1, 1): [F(9, 10), F(1, 10)]}
Q = {(): [F(2, 5), F(3, 5)], (0,): [F(3, 4), F(1, 4)], (1,): [F(1, 2), F(1, 2)],
     (0, 0): [F(1, 2), F(1, 2)], (0, 1): [F(3, 5), F(2, 5)],
     (1, 0): [F(1, 10), F(9, 10)], (1, 1): [F(1, 2), F(1, 2)]}
OMEGA = [F(3, 2), F(5, 4)]
V, L = 2, 2


def f(prefix, x, omega):
    p, q = P[prefix][x], Q[prefix][x]
    if q == 0:
        return F(1)
    return min(F(1), omega * p / q)


def gstar(prefix, omega):
    res = [max(F(0), P[prefix][y] - Q[prefix][y] * f(prefix, y, omega)) for y in range(V)]
    s = sum(res)
    return [r / s for r in res] if s > 0 else list(P[prefix])


def seq_p(seq, start=()):
    out, pre = F(1), tuple(start)
    for t in seq:
        out *= P[pre][t]
        pre = pre + (t,)
    return out


def output_dist(omegas):
    dist = {s: F(0) for s in product(range(V), repeat=L + 1)}
    for drafts in product(range(V), repeat=L):
        q_mass = F(1)
        pre = ()
        for t in drafts:
            q_mass *= Q[pre][t]
            pre += (t,)
        alive = q_mass
        for i in range(L):
            prefix = drafts[:i]
            acc = f(prefix, drafts[i], omegas[i])
            rej = alive * (1 - acc)
            if rej > 0:
                g = gstar(prefix, omegas[i])
                for y in range(V):
                    head = prefix + (y,)
                    for tail in product(range(V), repeat=L - i):
                        dist[head + tail] += rej * g[y] * seq_p(tail, head)
            alive *= acc
        for y in range(V):
            dist[drafts + (y,)] += alive * P[drafts][y]
    return dist


def expected_len(omegas):
    total = F(1)
    for i in range(1, L + 1):
        for prefix in product(range(V), repeat=i):
            w = F(1)
            for j in range(i):
                w *= Q[prefix[:j]][prefix[j]] * f(prefix[:j], prefix[j], omegas[j])
            total += w
    return total


def tvb(omegas):
    total = F(0)
    for i in range(L):
        for prefix in product(range(V), repeat=i):
            w = F(1)
            for j in range(i):
                w *= Q[prefix[:j]][prefix[j]] * f(prefix[:j], prefix[j], omegas[j])
            r = sum(Q[prefix][t] * (1 - f(prefix, t, omegas[i])) for t in range(V))
            g = gstar(prefix, omegas[i])
            total += w * sum(abs(Q[prefix][y] * f(prefix, y, omegas[i]) - P[prefix][y] + r * g[y])
                             for y in range(V))
    return total / 2


if __name__ == "__main__":
    for omegas in ([F(1), F(1)], OMEGA):
        d = output_dist(omegas)
        tv = sum(abs(d[s] - seq_p(s)) for s in d) / 2
        print("omegas", [str(o) for o in omegas])
        for s in sorted(d):
            print("  ", s, repr(float(d[s])))
        print("  tv", repr(float(tv)), tv)
        print("  tvb", repr(float(tvb(omegas))), tvb(omegas))
        print("  E", repr(float(expected_len(omegas))), expected_len(omegas))
