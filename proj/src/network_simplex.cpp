#include "needle/network_simplex.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace needle {

TransportSimplex::TransportSimplex(std::vector<double> supply, std::vector<double> demand, double art_cost,
                                   Options opt)
    : num_sources_(static_cast<int>(supply.size())),
      num_sinks_(static_cast<int>(demand.size())),
      root_(num_sources_ + num_sinks_),
      art_(supply.size() + demand.size()),
      opt_(opt) {
  const int n = root_ + 1;
  parent_.assign(n, -1);
  pred_.assign(n, -1);
  up_.assign(n, 0);
  depth_.assign(n, 0);
  pi_.assign(n, 0.0);
  first_child_.assign(n, -1);
  next_sib_.assign(n, -1);
  prev_sib_.assign(n, -1);
  for (int v = 0; v < root_; ++v) {
    const bool is_source = v < num_sources_;
    source_.push_back(is_source ? v : root_);
    target_.push_back(is_source ? root_ : v);
    cost_.push_back(is_source ? 0.0 : art_cost);
    flow_.push_back(is_source ? supply[v] : demand[v - num_sources_]);
    state_.push_back(kTree);
    parent_[v] = root_;
    pred_[v] = v;
    up_[v] = is_source ? 1 : 0;
    depth_[v] = 1;
    pi_[v] = is_source ? 0.0 : art_cost;
    attach_child(root_, v);
  }
}

int TransportSimplex::add_arc(int source, int sink, double cost) {
  source_.push_back(source);
  target_.push_back(num_sources_ + sink);
  cost_.push_back(cost);
  flow_.push_back(0.0);
  state_.push_back(kLower);
  return static_cast<int>(source_.size() - art_ - 1);
}

void TransportSimplex::detach_child(int v) {
  const int p = parent_[v];
  if (prev_sib_[v] >= 0)
    next_sib_[prev_sib_[v]] = next_sib_[v];
  else if (p >= 0)
    first_child_[p] = next_sib_[v];
  if (next_sib_[v] >= 0) prev_sib_[next_sib_[v]] = prev_sib_[v];
  next_sib_[v] = prev_sib_[v] = -1;
}

void TransportSimplex::attach_child(int parent, int v) {
  prev_sib_[v] = -1;
  next_sib_[v] = first_child_[parent];
  if (first_child_[parent] >= 0) prev_sib_[first_child_[parent]] = v;
  first_child_[parent] = v;
}

int TransportSimplex::find_entering() {
  const std::int64_t m = static_cast<std::int64_t>(source_.size() - art_);
  if (m == 0) return -1;
  const std::int64_t block =
      opt_.block_size > 0 ? opt_.block_size
                          : std::clamp<std::int64_t>(static_cast<std::int64_t>(std::sqrt(double(m)) / 10), 10, 1000);
  double best = -opt_.eps;
  int chosen = -1;
  std::int64_t count = block;
  for (std::int64_t k = 0; k < m; ++k) {
    const std::int64_t a = static_cast<std::int64_t>(art_) + (next_arc_ + k) % m;
    if (state_[a] == kLower) {
      const double rc = cost_[a] + pi_[source_[a]] - pi_[target_[a]];
      if (rc < best) {
        best = rc;
        chosen = static_cast<int>(a);
      }
    }
    if (--count == 0) {
      if (chosen >= 0) {
        next_arc_ = (next_arc_ + k + 1) % m;
        return chosen;
      }
      count = block;
    }
  }
  return chosen;
}

int TransportSimplex::find_join(int u, int v) const {
  while (u != v) {
    if (depth_[u] > depth_[v])
      u = parent_[u];
    else if (depth_[v] > depth_[u])
      v = parent_[v];
    else {
      u = parent_[u];
      v = parent_[v];
    }
  }
  return u;
}

void TransportSimplex::refresh_subtree(int root, double sigma) {
  stack_.clear();
  stack_.push_back(root);
  while (!stack_.empty()) {
    const int w = stack_.back();
    stack_.pop_back();
    pi_[w] += sigma;
    depth_[w] = depth_[parent_[w]] + 1;
    for (int c = first_child_[w]; c >= 0; c = next_sib_[c]) stack_.push_back(c);
  }
}

void TransportSimplex::pivot(int in_arc) {
  const int first = source_[in_arc];
  const int second = target_[in_arc];
  const int join = find_join(first, second);
  constexpr double inf = std::numeric_limits<double>::infinity();
  double delta = inf;
  int u_out = -1;
  int side = 0;
  // Flow is pushed along in_arc, then from second up to join and down to first.
  for (int u = first; u != join; u = parent_[u]) {
    const double d = up_[u] ? flow_[pred_[u]] : inf;
    if (d < delta) {
      delta = d;
      u_out = u;
      side = 1;
    }
  }
  for (int u = second; u != join; u = parent_[u]) {
    const double d = up_[u] ? inf : flow_[pred_[u]];
    if (d <= delta) {
      delta = d;
      u_out = u;
      side = 2;
    }
  }
  if (delta > 0) {
    flow_[in_arc] += delta;
    for (int u = first; u != join; u = parent_[u]) flow_[pred_[u]] += up_[u] ? -delta : delta;
    for (int u = second; u != join; u = parent_[u]) flow_[pred_[u]] += up_[u] ? delta : -delta;
  }
  const int out_arc = pred_[u_out];
  const int u_in = side == 1 ? first : second;
  const int v_in = side == 1 ? second : first;

  // Reverse the tree path u_in -> ... -> u_out and hang it below v_in.
  path_.clear();
  for (int w = u_in; w != u_out; w = parent_[w]) path_.push_back(w);
  path_.push_back(u_out);
  std::vector<int> old_pred(path_.size());
  std::vector<std::int8_t> old_up(path_.size());
  for (std::size_t k = 0; k < path_.size(); ++k) {
    old_pred[k] = pred_[path_[k]];
    old_up[k] = up_[path_[k]];
    detach_child(path_[k]);
  }
  parent_[u_in] = v_in;
  pred_[u_in] = in_arc;
  up_[u_in] = source_[in_arc] == u_in ? 1 : 0;
  attach_child(v_in, u_in);
  for (std::size_t k = 1; k < path_.size(); ++k) {
    const int w = path_[k];
    parent_[w] = path_[k - 1];
    pred_[w] = old_pred[k - 1];
    up_[w] = old_up[k - 1] ? 0 : 1;
    attach_child(parent_[w], w);
  }
  state_[in_arc] = kTree;
  state_[out_arc] = kLower;

  const double rc = cost_[in_arc] + pi_[first] - pi_[second];
  refresh_subtree(u_in, u_in == first ? -rc : rc);
}

bool TransportSimplex::optimize() {
  const std::int64_t budget =
      opt_.max_pivots > 0 ? opt_.max_pivots
                          : 1000 + 200 * static_cast<std::int64_t>(root_) + 10 * static_cast<std::int64_t>(arc_count());
  std::int64_t local = 0;
  for (;;) {
    const int a = find_entering();
    if (a < 0) return true;
    pivot(a);
    ++pivots_;
    if (++local > budget) return false;
  }
}

void TransportSimplex::recompute_potentials() {
  pi_[root_] = 0.0;
  stack_.clear();
  for (int c = first_child_[root_]; c >= 0; c = next_sib_[c]) stack_.push_back(c);
  while (!stack_.empty()) {
    const int w = stack_.back();
    stack_.pop_back();
    const int a = pred_[w];
    pi_[w] = up_[w] ? pi_[parent_[w]] - cost_[a] : pi_[parent_[w]] + cost_[a];
    depth_[w] = depth_[parent_[w]] + 1;
    for (int c = first_child_[w]; c >= 0; c = next_sib_[c]) stack_.push_back(c);
  }
}

std::vector<TransportSimplex::Flow> TransportSimplex::flows() const {
  std::vector<Flow> out;
  for (std::size_t a = art_; a < source_.size(); ++a)
    if (flow_[a] > 0) out.push_back({source_[a], target_[a] - num_sources_, flow_[a]});
  std::sort(out.begin(), out.end(),
            [](const Flow& x, const Flow& y) { return x.source < y.source || (x.source == y.source && x.sink < y.sink); });
  return out;
}

double TransportSimplex::artificial_flow() const {
  double s = 0.0;
  for (std::size_t a = 0; a < art_; ++a) s += flow_[a];
  return s;
}

}  // namespace needle
