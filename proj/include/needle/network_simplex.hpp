#pragma once

#include <cstdint>
#include <vector>

namespace needle {

// Primal network simplex for an uncapacitated bipartite transportation problem
// whose arc set may grow between solves (column generation). Spanning tree
// bookkeeping follows the strongly feasible rule of Cunningham, which excludes
// cycling under degeneracy. An artificial root joins every node; its arcs carry
// the initial feasible flow and are priced at art_cost.
class TransportSimplex {
 public:
  struct Options {
    int block_size = 0;        // pricing block; 0 picks sqrt(#arcs) / 10
    std::int64_t start_arc = 0;  // where block search begins (pivot order)
    double eps = 1e-12;        // entering threshold on reduced cost
    std::int64_t max_pivots = 0;  // 0 picks a generous default
  };

  struct Flow {
    int source;
    int sink;
    double mass;
  };

  TransportSimplex(std::vector<double> supply, std::vector<double> demand, double art_cost, Options opt);

  int add_arc(int source, int sink, double cost);
  std::size_t arc_count() const { return source_.size() - art_; }

  // Pivots until no candidate arc prices out. Returns false when the pivot
  // budget is exhausted.
  bool optimize();

  // Rebuilds node potentials from the tree (removes drift from incremental updates).
  void recompute_potentials();

  // Potentials pi with reduced cost c + pi_source - pi_sink.
  double source_pi(int i) const { return pi_[i]; }
  double sink_pi(int j) const { return pi_[num_sources_ + j]; }

  std::vector<Flow> flows() const;
  double artificial_flow() const;
  std::int64_t pivots() const { return pivots_; }

 private:
  enum : std::int8_t { kTree = 0, kLower = 1 };

  int find_entering();
  int find_join(int u, int v) const;
  void pivot(int in_arc);
  void detach_child(int v);
  void attach_child(int parent, int v);
  void refresh_subtree(int root, double sigma);

  int num_sources_;
  int num_sinks_;
  int root_;
  std::size_t art_;
  Options opt_;

  std::vector<int> source_;
  std::vector<int> target_;
  std::vector<double> cost_;
  std::vector<double> flow_;
  std::vector<std::int8_t> state_;

  std::vector<int> parent_;
  std::vector<int> pred_;
  std::vector<std::int8_t> up_;  // pred arc points from node to parent
  std::vector<int> depth_;
  std::vector<double> pi_;
  std::vector<int> first_child_;
  std::vector<int> next_sib_;
  std::vector<int> prev_sib_;

  std::int64_t next_arc_ = 0;
  std::int64_t pivots_ = 0;
  std::vector<int> stack_;
  std::vector<int> path_;
};

}  // namespace needle
