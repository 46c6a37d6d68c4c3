#pragma once

// Linear-scan nearest neighbour, the reference for Registry::recognize.

#include <cmath>
#include <random>
#include <vector>

#include "wolly/identity.hpp"

namespace wolly::testgen {

inline std::vector<double> random_embedding(std::mt19937_64& rng, std::size_t d) {
    std::normal_distribution<double> n(0, 0.3);
    std::vector<double> v(d);
    for (auto& x : v) x = n(rng);
    return v;
}

// Linear scan, strict < keeps the earliest on ties.
inline identity::MatchResult scan_oracle(const std::vector<identity::UserProfile>& ps, const std::vector<double>& probe, double threshold) {
    identity::MatchResult r;
    double best = INFINITY;
    const identity::UserProfile* who = nullptr;
    for (const auto& p : ps) {
        double s = 0;
        for (std::size_t i = 0; i < probe.size(); ++i) s += (p.embedding[i] - probe[i]) * (p.embedding[i] - probe[i]);
        double d = std::sqrt(s);
        if (d < best) {
            best = d;
            who = &p;
        }
    }
    if (!who) return r;
    r.distance = best;
    if (best <= threshold) r.profile_id = who->id;
    return r;
}

}  // namespace wolly::testgen
