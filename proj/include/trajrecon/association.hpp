#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "trajrecon/core.hpp"
#include "trajrecon/cost_model.hpp"

namespace trajrecon {

/// Cycles with cost below -kCycleEps are canceled; anything closer to zero
/// is treated as float noise.
constexpr double kCycleEps = 1e-9;

enum class EdgeKind : std::uint8_t { entry, inclusion, transition, exit };

/// The tracklet flow network in residual form.
///
/// Every constructive edge (unit capacity, cost c) is stored as a pair of
/// residual arcs: the forward arc with capacity 1 and cost c, and its twin
/// with capacity 0 and cost -c. Pushing one unit of flow moves capacity
/// from an arc to its twin, which is exactly the reverse-and-negate rule
/// for residual graphs with unit capacities.
class ResidualGraph {
 public:
  static constexpr int kSource = 0;

  struct Arc {
    int from = -1;
    int to = -1;
    int cap = 0;
    double cost = 0.0;
    int pos = -1;  // index of this arc in adj_[from]
    EdgeKind kind = EdgeKind::entry;
    bool forward = false;  // true for the original orientation
    bool alive = false;
  };

  ResidualGraph() { adj_.emplace_back(); }

  int add_node() {
    if (!free_nodes_.empty()) {
      int n = free_nodes_.back();
      free_nodes_.pop_back();
      node_alive_[n] = true;
      ++alive_nodes_;
      return n;
    }
    adj_.emplace_back();
    node_alive_.push_back(true);
    ++alive_nodes_;
    return static_cast<int>(adj_.size()) - 1;
  }

  /// Adds a unit-capacity edge and its zero-capacity twin. Returns the id
  /// of the forward arc; the twin is always id ^ 1.
  int add_edge(int from, int to, double cost, EdgeKind kind) {
    int id;
    if (!free_pairs_.empty()) {
      id = free_pairs_.back();
      free_pairs_.pop_back();
    } else {
      id = static_cast<int>(arcs_.size());
      arcs_.emplace_back();
      arcs_.emplace_back();
    }
    arcs_[id] = Arc{from, to, 1, cost, -1, kind, true, true};
    arcs_[id ^ 1] = Arc{to, from, 0, -cost, -1, kind, false, true};
    link(id);
    link(id ^ 1);
    return id;
  }

  void remove_node(int n) {
    while (!adj_[n].empty()) remove_pair(adj_[n].back());
    node_alive_[n] = false;
    --alive_nodes_;
    free_nodes_.push_back(n);
  }

  /// Moves one unit of capacity to the twin arc (reverses the edge).
  void push(int arc_id) {
    Arc& a = arcs_[arc_id];
    if (!a.alive || a.cap < 1) throw std::logic_error("push through saturated or dead arc");
    a.cap -= 1;
    arcs_[arc_id ^ 1].cap += 1;
  }

  const Arc& arc(int id) const { return arcs_[id]; }
  std::size_t arc_slots() const { return arcs_.size(); }
  const std::vector<int>& out_arcs(int node) const { return adj_[node]; }
  std::size_t node_slots() const { return adj_.size(); }
  int alive_nodes() const { return alive_nodes_; }
  bool is_alive(int node) const { return node == kSource || node_alive_[node]; }

  /// Sum of costs over forward arcs currently carrying flow.
  double flow_cost() const {
    double total = 0.0;
    for (std::size_t id = 0; id < arcs_.size(); id += 2) {
      const Arc& a = arcs_[id];
      if (a.alive && a.forward && a.cap == 0) total += a.cost;
    }
    return total;
  }

 private:
  void link(int id) {
    Arc& a = arcs_[id];
    a.pos = static_cast<int>(adj_[a.from].size());
    adj_[a.from].push_back(id);
  }

  void unlink(int id) {
    Arc& a = arcs_[id];
    std::vector<int>& list = adj_[a.from];
    const int moved = list.back();
    list[a.pos] = moved;
    arcs_[moved].pos = a.pos;
    list.pop_back();
    a.pos = -1;
  }

  void remove_pair(int id) {
    const int base = id & ~1;
    unlink(base);
    unlink(base ^ 1);
    arcs_[base].alive = false;
    arcs_[base ^ 1].alive = false;
    free_pairs_.push_back(base);
  }

  std::vector<Arc> arcs_;
  std::vector<std::vector<int>> adj_;
  std::vector<int> free_pairs_;
  std::vector<int> free_nodes_;
  std::vector<std::uint8_t> node_alive_{1};
  int alive_nodes_ = 1;
};

/// A closed walk of positive-capacity residual arcs.
struct Cycle {
  std::vector<int> arcs;
  double cost = 0.0;
};

namespace detail {

/// Frontier-based Bellman-Ford sweep with zero initial distances (implicit
/// super-source). After every round the predecessor graph is scanned for
/// cycles: any cycle in it certifies a negative cycle under strict
/// relaxation, so the sweep ends as soon as one closes instead of running
/// all V rounds. Every node-disjoint predecessor cycle found is returned;
/// node-disjoint cycles never share arcs, so they can be canceled together.
inline std::vector<Cycle> negative_cycle_batch(const ResidualGraph& g) {
  const std::size_t ns = g.node_slots();
  std::vector<double> dist(ns, 0.0);
  std::vector<int> pred(ns, -1);
  std::vector<std::uint8_t> in_frontier(ns, 0);
  std::vector<std::uint32_t> mark(ns, 0);  // pred-walk stamps

  std::vector<int> frontier;
  for (std::size_t n = 0; n < ns; ++n)
    if (g.is_alive(static_cast<int>(n))) frontier.push_back(static_cast<int>(n));

  const int rounds = g.alive_nodes() + 1;
  std::vector<int> next;
  std::uint32_t walk_id = 0;
  constexpr std::uint32_t kDone = 0xFFFFFFFFu;

  for (int r = 0; r <= rounds && !frontier.empty(); ++r) {
    next.clear();
    for (int n : frontier) {
      const double dn = dist[n];
      for (int id : g.out_arcs(n)) {
        const auto& a = g.arc(id);
        if (a.cap <= 0) continue;
        const double nd = dn + a.cost;
        if (nd < dist[a.to]) {
          dist[a.to] = nd;
          pred[a.to] = id;
          if (!in_frontier[a.to]) {
            in_frontier[a.to] = 1;
            next.push_back(a.to);
          }
        }
      }
    }
    for (int n : next) in_frontier[n] = 0;
    frontier.swap(next);
    if (frontier.empty()) return {};

    // cycle scan over the predecessor graph
    std::vector<Cycle> cycles;
    for (int start : frontier) {
      if (mark[start] != 0) continue;
      ++walk_id;
      int x = start;
      while (x >= 0 && mark[x] == 0 && pred[x] >= 0) {
        mark[x] = walk_id;
        x = g.arc(pred[x]).from;
      }
      if (x >= 0 && mark[x] == walk_id) {
        // closed within this walk: collect the cycle
        Cycle c;
        int cur = x;
        do {
          c.arcs.push_back(pred[cur]);
          c.cost += g.arc(pred[cur]).cost;
          mark[cur] = kDone;
          cur = g.arc(pred[cur]).from;
        } while (cur != x);
        std::reverse(c.arcs.begin(), c.arcs.end());
        if (c.cost < -kCycleEps) cycles.push_back(std::move(c));
      }
    }
    if (!cycles.empty()) return cycles;
    // reset stamps touched this round
    std::fill(mark.begin(), mark.end(), 0);
    walk_id = 0;
  }
  return {};
}

}  // namespace detail

/// Bellman-Ford negative-cycle detection over positive-capacity arcs.
/// Returns a cycle with cost < -kCycleEps or nullopt.
inline std::optional<Cycle> find_negative_cycle(const ResidualGraph& g) {
  auto cycles = detail::negative_cycle_batch(g);
  if (cycles.empty()) return std::nullopt;
  return std::move(cycles.front());
}

/// Pushes one unit of flow around the cycle, reversing every arc on it.
inline void push_flow(ResidualGraph& g, const Cycle& cycle) {
  for (int id : cycle.arcs)
    if (g.arc(id).cap < 1) throw std::logic_error("push_flow: cycle arc lacks capacity");
  for (int id : cycle.arcs) g.push(id);
}


/// An ordered chain of fragments plus the cost its circulation unit carries.
struct Chain {
  std::vector<Fragment> fragments;
  double cost = 0.0;

  double first_t() const { return fragments.front().first_t(); }
  double last_t() const { return fragments.back().last_t(); }
  std::vector<std::string> ids() const {
    std::vector<std::string> out;
    out.reserve(fragments.size());
    for (const auto& f : fragments) out.push_back(f.id);
    return out;
  }
};

namespace detail {

struct FragmentNode {
  Fragment frag;
  MotionEstimate motion;
  int u = -1;
  int v = -1;
  bool alive = false;
};

}  // namespace detail

/// Batch circulation graph: node pair per fragment, entry/inclusion/exit
/// edges, and a transition edge for every feasible ordered pair.
class CirculationGraph {
 public:
  CirculationGraph() = default;

  CirculationGraph(std::span<const Fragment> fragments, const CostModelParams& params)
      : params_(params), costs_(node_costs(params)) {
    std::vector<MotionEstimate> est(fragments.size());
    for (std::size_t i = 0; i < fragments.size(); ++i) {
      validate_fragment(fragments[i]);
      est[i] = fit_motion(fragments[i], params);
      const int u = graph_.add_node();
      const int v = graph_.add_node();
      node_of_.resize(graph_.node_slots(), -1);
      node_of_[u] = static_cast<int>(i);
      node_of_[v] = static_cast<int>(i);
      frags_.push_back({fragments[i], est[i], u, v, true});
      graph_.add_edge(ResidualGraph::kSource, u, costs_.enter, EdgeKind::entry);
      graph_.add_edge(u, v, costs_.include, EdgeKind::inclusion);
      graph_.add_edge(v, ResidualGraph::kSource, costs_.exit, EdgeKind::exit);
    }
    for (std::size_t i = 0; i < fragments.size(); ++i) {
      for (std::size_t j = 0; j < fragments.size(); ++j) {
        if (i == j) continue;
        const auto cost =
            transition_cost_from(est[i], fragments[i].last_t(), fragments[j], params);
        if (cost) graph_.add_edge(frags_[i].v, frags_[j].u, *cost, EdgeKind::transition);
      }
    }
  }

  ResidualGraph& graph() { return graph_; }
  const ResidualGraph& graph() const { return graph_; }
  std::size_t fragment_count() const { return frags_.size(); }
  const Fragment& fragment(int index) const { return frags_[index].frag; }
  int fragment_of_node(int node) const { return node_of_[node]; }
  int u_node(int index) const { return frags_[index].u; }
  int v_node(int index) const { return frags_[index].v; }

  /// Cancels negative cycles until none remain. Each detection sweep
  /// harvests every disjoint negative cycle it can see before re-running.
  void solve() {
    while (true) {
      const auto cycles = detail::negative_cycle_batch(graph_);
      if (cycles.empty()) break;
      for (const auto& c : cycles) push_flow(graph_, c);
    }
  }

  /// Traces the circulation into ordered fragment-id chains. One chain per
  /// unit of flow through the source; chains are disjoint by conservation.
  std::vector<std::vector<std::string>> chains() const {
    std::vector<std::vector<std::string>> out;
    for (const auto& rec : frags_) {
      if (!rec.alive) continue;
      if (!entry_flowed(rec)) continue;
      std::vector<std::string> chain;
      int idx = node_of_[rec.u];
      while (true) {
        const auto& cur = frags_[idx];
        if (!inclusion_flowed(cur)) throw std::logic_error("flow trace: chain member not included");
        chain.push_back(cur.frag.id);
        const int next = flowed_successor(cur);
        if (next < 0) break;
        idx = next;
      }
      out.push_back(std::move(chain));
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  double total_cost() const { return graph_.flow_cost(); }

 private:
  bool entry_flowed(const detail::FragmentNode& rec) const {
    for (int id : graph_.out_arcs(rec.u)) {
      const auto& a = graph_.arc(id);
      if (!a.forward && a.kind == EdgeKind::entry && a.cap == 1) return true;
    }
    return false;
  }
  bool inclusion_flowed(const detail::FragmentNode& rec) const {
    for (int id : graph_.out_arcs(rec.u)) {
      const auto& a = graph_.arc(id);
      if (a.forward && a.kind == EdgeKind::inclusion) return a.cap == 0;
    }
    return false;
  }
  /// Index of the fragment the flow continues to, or -1 when it exits.
  int flowed_successor(const detail::FragmentNode& rec) const {
    int next = -1;
    int hits = 0;
    for (int id : graph_.out_arcs(rec.v)) {
      const auto& a = graph_.arc(id);
      if (!a.forward || a.cap != 0) continue;
      ++hits;
      if (a.kind == EdgeKind::transition) next = node_of_[a.to];
    }
    if (hits != 1) throw std::logic_error("flow trace: conservation violated at fragment node");
    return next;
  }

  CostModelParams params_;
  NodeCosts costs_;
  ResidualGraph graph_;
  std::vector<detail::FragmentNode> frags_;
  std::vector<int> node_of_{-1};
};

inline CirculationGraph construct_graph(std::span<const Fragment> fragments,
                                        const CostModelParams& params) {
  return CirculationGraph(fragments, params);
}

/// Batch negative-cycle canceling: returns the ordered fragment-id chains
/// of a minimum-cost circulation.
inline std::vector<std::vector<std::string>> ncc_batch(std::span<const Fragment> fragments,
                                                       const CostModelParams& params) {
  CirculationGraph g(fragments, params);
  g.solve();
  return g.chains();
}

/// Streaming association with bounded memory.
///
/// Fragments arrive ordered by last timestamp. Each insertion adds one node
/// pair and its incident edges, then cancels the least-cost negative cycle
/// through the new pair, found by a single-source shortest-path pass over
/// the residual graph (well-defined: the graph held no negative cycle
/// before the insertion). Chains whose last timestamp falls behind the
/// watermark by more than the horizon are finalized and removed.
class AssociationState {
 public:
  explicit AssociationState(CostModelParams params,
                            double horizon = std::numeric_limits<double>::infinity())
      : params_(params), costs_(node_costs(params)), horizon_(horizon) {
    params_.validate();
  }

  double watermark() const { return watermark_; }
  double horizon() const { return horizon_; }
  std::size_t resident_fragments() const { return resident_; }
  std::size_t peak_resident_fragments() const { return peak_resident_; }
  const ResidualGraph& graph() const { return graph_; }

  /// Inserts a fragment and restores circulation optimality.
  void add(Fragment frag) {
    validate_fragment(frag);
    if (frag.last_t() < watermark_ - 1e-9)
      throw std::runtime_error("watermark violation: fragment " + frag.id +
                               " ends before the stream watermark");
    watermark_ = std::max(watermark_, frag.last_t());

    const int slot = allocate_slot();
    detail::FragmentNode& rec = slots_[slot];
    rec.frag = std::move(frag);
    rec.motion = fit_motion(rec.frag, params_);
    rec.u = graph_.add_node();
    rec.v = graph_.add_node();
    rec.alive = true;
    bind_node(rec.u, slot);
    bind_node(rec.v, slot);

    const int entry_arc = graph_.add_edge(ResidualGraph::kSource, rec.u, costs_.enter, EdgeKind::entry);
    const int incl_arc = graph_.add_edge(rec.u, rec.v, costs_.include, EdgeKind::inclusion);
    graph_.add_edge(rec.v, ResidualGraph::kSource, costs_.exit, EdgeKind::exit);

    // Candidate predecessors: fragments ending strictly before this one
    // starts, within the max gap.
    std::vector<int> closing;
    closing.push_back(entry_arc);
    const double t0 = rec.frag.first_t();
    auto it = by_last_t_.lower_bound(t0 - params_.max_gap);
    for (; it != by_last_t_.end() && it->first < t0; ++it) {
      const detail::FragmentNode& cand = slots_[it->second];
      const auto cost = transition_cost_from(cand.motion, cand.frag.last_t(), rec.frag, params_);
      if (cost) closing.push_back(graph_.add_edge(cand.v, rec.u, *cost, EdgeKind::transition));
    }

    cancel_min_cycle(rec, closing, incl_arc);

    by_last_t_.emplace(rec.frag.last_t(), slot);
    ++resident_;
    peak_resident_ = std::max(peak_resident_, resident_);
  }

  /// Finalizes every chain whose last timestamp is older than
  /// watermark - horizon, removing it from the graph. Unincluded fragments
  /// older than the cutoff are dropped as false positives.
  std::vector<Chain> evict() { return finalize(watermark_ - horizon_); }

  /// Finalizes everything and resets the graph.
  std::vector<Chain> flush() { return finalize(std::numeric_limits<double>::infinity()); }

  /// Chains currently encoded by the circulation (no removal).
  std::vector<Chain> chains() const {
    std::vector<Chain> out;
    for (std::size_t slot = 0; slot < slots_.size(); ++slot) {
      if (!slots_[slot].alive || !entry_flowed(slots_[slot])) continue;
      out.push_back(trace_chain(static_cast<int>(slot)));
    }
    sort_chains(out);
    return out;
  }

 private:
  static void sort_chains(std::vector<Chain>& cs) {
    std::sort(cs.begin(), cs.end(), [](const Chain& a, const Chain& b) {
      if (a.first_t() != b.first_t()) return a.first_t() < b.first_t();
      return a.fragments.front().id < b.fragments.front().id;
    });
  }

  int allocate_slot() {
    if (!free_slots_.empty()) {
      const int s = free_slots_.back();
      free_slots_.pop_back();
      return s;
    }
    slots_.emplace_back();
    return static_cast<int>(slots_.size()) - 1;
  }

  void bind_node(int node, int slot) {
    if (static_cast<std::size_t>(node) >= node_slot_.size()) node_slot_.resize(node + 1, -1);
    node_slot_[node] = slot;
  }

  /// Shortest paths from v_new over positive-capacity arcs, skipping the
  /// new inclusion edge (the only way the search could return to the new
  /// pair). SPFA handles the negative inclusion/reversed arcs; termination
  /// is guaranteed because the searched subgraph has no negative cycle.
  void cancel_min_cycle(const detail::FragmentNode& rec, const std::vector<int>& closing,
                        int incl_arc) {
    const std::size_t ns = graph_.node_slots();
    if (dist_.size() < ns) {
      dist_.resize(ns);
      pred_.resize(ns);
      stamp_.resize(ns, 0);
      inq_.resize(ns, 0);
    }
    ++epoch_;
    auto touched = [&](int n) { return stamp_[n] == epoch_; };
    auto touch = [&](int n) {
      stamp_[n] = epoch_;
      dist_[n] = std::numeric_limits<double>::infinity();
      pred_[n] = -1;
      inq_[n] = 0;
    };

    touch(rec.v);
    dist_[rec.v] = 0.0;
    std::deque<int> queue{rec.v};
    inq_[rec.v] = 1;
    while (!queue.empty()) {
      const int n = queue.front();
      queue.pop_front();
      inq_[n] = 0;
      if (n == rec.u) continue;  // nothing may leave the new pair
      const double dn = dist_[n];
      for (int id : graph_.out_arcs(n)) {
        const auto& a = graph_.arc(id);
        if (a.cap <= 0 || id == incl_arc) continue;
        if (!touched(a.to)) touch(a.to);
        const double nd = dn + a.cost;
        if (nd < dist_[a.to]) {
          dist_[a.to] = nd;
          pred_[a.to] = id;
          if (!inq_[a.to]) {
            inq_[a.to] = 1;
            queue.push_back(a.to);
          }
        }
      }
    }

    // Close through u_new -> v_new; pick the cheapest entering arc.
    int best_arc = -1;
    double best = -kCycleEps;
    for (int id : closing) {
      const auto& a = graph_.arc(id);
      if (!touched(a.from) || !std::isfinite(dist_[a.from])) continue;
      const double total = dist_[a.from] + a.cost + costs_.include;
      if (total < best) {
        best = total;
        best_arc = id;
      }
    }
    if (best_arc < 0) return;

    Cycle cycle;
    int cur = graph_.arc(best_arc).from;
    std::vector<int> path;
    while (cur != rec.v) {
      const int a = pred_[cur];
      path.push_back(a);
      cur = graph_.arc(a).from;
    }
    std::reverse(path.begin(), path.end());
    cycle.arcs = std::move(path);
    cycle.arcs.push_back(best_arc);
    cycle.arcs.push_back(incl_arc);
    cycle.cost = best;
    push_flow(graph_, cycle);
  }

  bool entry_flowed(const detail::FragmentNode& rec) const {
    for (int id : graph_.out_arcs(rec.u)) {
      const auto& a = graph_.arc(id);
      if (!a.forward && a.kind == EdgeKind::entry && a.cap == 1) return true;
    }
    return false;
  }

  bool inclusion_flowed(const detail::FragmentNode& rec) const {
    for (int id : graph_.out_arcs(rec.u)) {
      const auto& a = graph_.arc(id);
      if (a.forward && a.kind == EdgeKind::inclusion) return a.cap == 0;
    }
    return false;
  }

  Chain trace_chain(int start_slot, std::vector<int>* member_slots = nullptr) const {
    Chain chain;
    chain.cost = costs_.enter;
    int slot = start_slot;
    while (true) {
      const detail::FragmentNode& cur = slots_[slot];
      if (!inclusion_flowed(cur)) throw std::logic_error("flow trace: chain member not included");
      chain.fragments.push_back(cur.frag);
      if (member_slots) member_slots->push_back(slot);
      chain.cost += costs_.include;
      int next = -1;
      int hits = 0;
      for (int id : graph_.out_arcs(cur.v)) {
        const auto& a = graph_.arc(id);
        if (!a.forward || a.cap != 0) continue;
        ++hits;
        chain.cost += a.cost;
        if (a.kind == EdgeKind::transition) next = node_slot_[a.to];
      }
      if (hits != 1) throw std::logic_error("flow trace: conservation violated");
      if (next < 0) break;
      slot = next;
    }
    return chain;
  }

  std::vector<Chain> finalize(double cutoff) {
    // Collect chains and standalone fragments first, then mutate the graph.
    std::vector<Chain> emitted;
    std::vector<int> stale_slots;
    for (std::size_t slot = 0; slot < slots_.size(); ++slot) {
      const auto& rec = slots_[slot];
      if (!rec.alive) continue;
      if (entry_flowed(rec)) {
        std::vector<int> members;
        Chain c = trace_chain(static_cast<int>(slot), &members);
        if (c.last_t() < cutoff) {
          emitted.push_back(std::move(c));
          stale_slots.insert(stale_slots.end(), members.begin(), members.end());
        }
      } else if (!inclusion_flowed(rec) && rec.frag.last_t() < cutoff) {
        stale_slots.push_back(static_cast<int>(slot));
      }
    }
    for (int s : stale_slots) release_slot(s);
    sort_chains(emitted);
    return emitted;
  }

  void release_slot(int slot) {
    detail::FragmentNode& rec = slots_[slot];
    auto range = by_last_t_.equal_range(rec.frag.last_t());
    for (auto it = range.first; it != range.second; ++it) {
      if (it->second == slot) {
        by_last_t_.erase(it);
        break;
      }
    }
    graph_.remove_node(rec.u);
    graph_.remove_node(rec.v);
    node_slot_[rec.u] = -1;
    node_slot_[rec.v] = -1;
    rec = detail::FragmentNode{};
    free_slots_.push_back(slot);
    --resident_;
  }

  CostModelParams params_;
  NodeCosts costs_;
  double horizon_;
  double watermark_ = -std::numeric_limits<double>::infinity();

  ResidualGraph graph_;
  std::vector<detail::FragmentNode> slots_;
  std::vector<int> free_slots_;
  std::vector<int> node_slot_;
  std::multimap<double, int> by_last_t_;

  std::size_t resident_ = 0;
  std::size_t peak_resident_ = 0;

  // SPFA scratch, epoch-stamped to avoid clearing per insertion.
  std::vector<double> dist_;
  std::vector<int> pred_;
  std::vector<std::uint32_t> stamp_;
  std::vector<std::uint8_t> inq_;
  std::uint32_t epoch_ = 0;
};

}  // namespace trajrecon
