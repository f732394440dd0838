// Copyright (c) 2026, The A2D Authors
// SPDX-License-Identifier: Apache-2.0
//
// Brute-force multiply-accumulate counter: walks every output element and
// every kernel tap (padded taps included) of each layer.

#pragma once

#include <cstddef>

#include "a2d/agent/backbone.hpp"

namespace a2d::testing {

struct MacCounter {
    double macs = 0.0;

    // returns the output extent
    std::size_t conv(std::size_t c_in, std::size_t c_out, std::size_t k, std::size_t stride, std::size_t h,
                     std::size_t w, bool depthwise, std::size_t* w_out = nullptr) {
        const std::size_t pad = k / 2;
        std::size_t ho = 0, wo = 0;
        for (std::size_t y = 0; y + k <= h + 2 * pad; y += stride) ++ho;
        for (std::size_t x = 0; x + k <= w + 2 * pad; x += stride) ++wo;
        for (std::size_t oc = 0; oc < c_out; ++oc)
            for (std::size_t y = 0; y < ho; ++y)
                for (std::size_t x = 0; x < wo; ++x)
                    for (std::size_t ic = 0; ic < (depthwise ? 1 : c_in); ++ic)
                        for (std::size_t t = 0; t < k * k; ++t) macs += 1.0;
        if (w_out) *w_out = wo;
        return ho;
    }

    double flops() const { return 2.0 * macs; }
};

inline double count_op_flops(agent::OpKind op, const agent::CellGeometry& g) {
    using agent::OpKind;
    MacCounter m;
    switch (op) {
        case OpKind::conv_k3:
            m.conv(g.c_in, g.c_out, 3, g.stride, g.h_in, g.w_in, false);
            break;
        case OpKind::conv_k5:
            m.conv(g.c_in, g.c_out, 5, g.stride, g.h_in, g.w_in, false);
            break;
        case OpKind::skip:
            if (g.stride != 1 || g.c_in != g.c_out) m.conv(g.c_in, g.c_out, 1, g.stride, g.h_in, g.w_in, false);
            break;
        default: {
            const std::size_t k = agent::op_kernel(op), e = agent::op_expansion(op);
            const std::size_t hidden = g.c_in * e;
            if (e > 1) m.conv(g.c_in, hidden, 1, 1, g.h_in, g.w_in, false);
            std::size_t wo = 0;
            const std::size_t ho = m.conv(hidden, hidden, k, g.stride, g.h_in, g.w_in, true, &wo);
            m.conv(hidden, g.c_out, 1, 1, ho, wo, false);
            break;
        }
    }
    return m.flops();
}

}  // namespace a2d::testing
