#pragma once

#include <stdexcept>
#include <vector>

#include "regsim/types.hpp"

// Time-varying weighted digraph over the agent network plus the exosystem
// (node 0), with Laplacians and the reachability audits behind the uniform
// connectivity assumption.

namespace regsim {

// Weighted digraph on nodes {0, ..., N}. weights(i, j) is the weight a_ij on
// the edge (j, i) into node i. Node 0 never has in-edges, and every nonzero
// weight must be at least alpha_min. Immutable after construction.
class WeightedDigraph {
public:
    WeightedDigraph(Matrix weights, double alpha_min = 0.1);

    int node_count() const { return static_cast<int>(weights_.rows()); }
    const Matrix& weights() const { return weights_; }
    double alpha_min() const { return alpha_min_; }

    bool has_edge(int from, int to) const { return weights_(to, from) > 0.0; }

    // Largest weighted in-degree over the nodes (bounds the Euler-stable
    // consensus step).
    double max_in_degree() const;

private:
    Matrix weights_;
    double alpha_min_;
};

struct LaplacianPair {
    Matrix L;        // (N+1) x (N+1), row sums zero
    Matrix L_minus;  // L with row 0 and column 0 removed
};

// Piecewise-constant topology: an ordered list of (duration, graph) segments,
// optionally repeated cyclically.
struct TopologySchedule {
    struct Segment {
        double duration;
        WeightedDigraph graph;
    };

    std::vector<Segment> segments;
    bool repeat = true;

    double period() const;
    // Segment index active at time t (cyclic when repeat is set; clamped to
    // the last segment past the horizon otherwise).
    int segment_at(double t) const;
    const WeightedDigraph& graph_at(double t) const { return segments[static_cast<size_t>(segment_at(t))].graph; }
    // Start times of the segments within one cycle.
    std::vector<double> segment_starts() const;

    void validate() const;
};

// Row-sum-zero Laplacian, l_ii = sum_j a_ij, l_ij = -a_ij.
LaplacianPair laplacian(const WeightedDigraph& g);

// Edge present iff present in any segment intersecting [t1, t2); weights are
// the maximum over contributing segments (only connectivity matters
// downstream). Throws std::invalid_argument unless t1 < t2.
WeightedDigraph union_digraph(const TopologySchedule& s, double t1, double t2);

// True iff every node is reachable from root along directed edges.
bool is_globally_reachable(const WeightedDigraph& g, int root);

// True iff for every segment start t1 in one cycle, the union digraph over
// [t1, t1+T] has node 0 globally reachable. Throws std::runtime_error for
// non-repeating schedules, where the check is undecidable beyond the horizon.
bool check_uniform_reachability(const TopologySchedule& s, double T);

}  // namespace regsim
