#include "regsim/graph.hpp"

#include <algorithm>
#include <cmath>
#include <queue>

namespace regsim {

WeightedDigraph::WeightedDigraph(Matrix weights, double alpha_min)
    : weights_(std::move(weights)), alpha_min_(alpha_min) {
    if (weights_.rows() != weights_.cols() || weights_.rows() < 1) {
        throw std::invalid_argument("WeightedDigraph: weight matrix must be square");
    }
    const int n = node_count();
    for (int i = 0; i < n; ++i) {
        if (weights_(i, i) != 0.0) {
            throw std::invalid_argument("WeightedDigraph: self-loops are not allowed");
        }
        for (int j = 0; j < n; ++j) {
            const double w = weights_(i, j);
            if (w < 0.0) {
                throw std::invalid_argument("WeightedDigraph: negative weight");
            }
            if (w > 0.0 && w < alpha_min_) {
                throw std::invalid_argument(
                    "WeightedDigraph: nonzero weight below alpha_min");
            }
        }
    }
    if (weights_.row(0).cwiseAbs().sum() != 0.0) {
        throw std::invalid_argument("WeightedDigraph: node 0 must not have in-edges");
    }
}

double WeightedDigraph::max_in_degree() const {
    return weights_.rowwise().sum().maxCoeff();
}

double TopologySchedule::period() const {
    double p = 0.0;
    for (const Segment& seg : segments) p += seg.duration;
    return p;
}

void TopologySchedule::validate() const {
    if (segments.empty()) {
        throw std::invalid_argument("TopologySchedule: no segments");
    }
    const int n = segments.front().graph.node_count();
    for (const Segment& seg : segments) {
        if (seg.duration <= 0.0) {
            throw std::invalid_argument("TopologySchedule: segment duration must be positive");
        }
        if (seg.graph.node_count() != n) {
            throw std::invalid_argument("TopologySchedule: graphs must share node count");
        }
    }
}

int TopologySchedule::segment_at(double t) const {
    const double p = period();
    double local   = t;
    if (repeat) {
        local = std::fmod(t, p);
        if (local < 0.0) local += p;
    } else if (t >= p) {
        return static_cast<int>(segments.size()) - 1;
    }
    double acc = 0.0;
    for (size_t i = 0; i < segments.size(); ++i) {
        acc += segments[i].duration;
        if (local < acc) return static_cast<int>(i);
    }
    return static_cast<int>(segments.size()) - 1;
}

std::vector<double> TopologySchedule::segment_starts() const {
    std::vector<double> starts;
    double acc = 0.0;
    for (const Segment& seg : segments) {
        starts.push_back(acc);
        acc += seg.duration;
    }
    return starts;
}

LaplacianPair laplacian(const WeightedDigraph& g) {
    const int n     = g.node_count();
    const Matrix& w = g.weights();
    Matrix L        = -w;
    for (int i = 0; i < n; ++i) {
        L(i, i) = w.row(i).sum();
    }
    LaplacianPair pair;
    pair.L       = L;
    pair.L_minus = L.bottomRightCorner(n - 1, n - 1);
    return pair;
}

WeightedDigraph union_digraph(const TopologySchedule& s, double t1, double t2) {
    if (!(t1 < t2)) {
        throw std::invalid_argument("union_digraph: require t1 < t2");
    }
    s.validate();
    const int n = s.segments.front().graph.node_count();
    Matrix acc  = Matrix::Zero(n, n);

    const double p = s.period();
    double alpha   = s.segments.front().graph.alpha_min();

    auto absorb = [&](const WeightedDigraph& g) {
        acc = acc.cwiseMax(g.weights());
        alpha = std::min(alpha, g.alpha_min());
    };

    if (s.repeat && t2 - t1 >= p) {
        for (const auto& seg : s.segments) absorb(seg.graph);
        return WeightedDigraph(acc, alpha);
    }

    // Walk segment instances overlapping [t1, t2).
    double base = 0.0;
    if (s.repeat) {
        base = std::floor(t1 / p) * p;
    }
    double t = base;
    while (t < t2) {
        for (const auto& seg : s.segments) {
            const double seg_end = t + seg.duration;
            if (t < t2 && seg_end > t1) absorb(seg.graph);
            t = seg_end;
            if (t >= t2) break;
        }
        if (!s.repeat) break;
    }
    return WeightedDigraph(acc, alpha);
}

bool is_globally_reachable(const WeightedDigraph& g, int root) {
    const int n = g.node_count();
    if (root < 0 || root >= n) {
        throw std::invalid_argument("is_globally_reachable: root out of range");
    }
    std::vector<bool> seen(static_cast<size_t>(n), false);
    std::queue<int> frontier;
    frontier.push(root);
    seen[static_cast<size_t>(root)] = true;
    int count = 1;
    while (!frontier.empty()) {
        const int u = frontier.front();
        frontier.pop();
        for (int v = 0; v < n; ++v) {
            if (!seen[static_cast<size_t>(v)] && g.has_edge(u, v)) {
                seen[static_cast<size_t>(v)] = true;
                ++count;
                frontier.push(v);
            }
        }
    }
    return count == n;
}

bool check_uniform_reachability(const TopologySchedule& s, double T) {
    if (T <= 0.0) {
        throw std::invalid_argument("check_uniform_reachability: window must be positive");
    }
    s.validate();
    if (!s.repeat) {
        throw std::runtime_error(
            "check_uniform_reachability: undecidable beyond horizon for "
            "non-repeating schedule");
    }
    for (double t1 : s.segment_starts()) {
        if (!is_globally_reachable(union_digraph(s, t1, t1 + T), 0)) {
            return false;
        }
    }
    return true;
}

}  // namespace regsim
