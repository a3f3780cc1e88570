#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <deque>
#include <exception>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <queue>
#include <string>
#include <thread>
#include <vector>

#include "trajrecon/association.hpp"
#include "trajrecon/config.hpp"
#include "trajrecon/jsonl.hpp"
#include "trajrecon/rectification.hpp"

namespace trajrecon {

/// Bounded blocking queue for cross-thread handoff of immutable messages.
template <typename T>
class Channel {
 public:
  explicit Channel(std::size_t capacity = 1024) : capacity_(capacity) {}

  bool send(T value) {
    std::unique_lock lock(mu_);
    cv_space_.wait(lock, [&] { return queue_.size() < capacity_ || closed_; });
    if (closed_) return false;
    queue_.push_back(std::move(value));
    cv_data_.notify_one();
    return true;
  }

  std::optional<T> receive() {
    std::unique_lock lock(mu_);
    cv_data_.wait(lock, [&] { return !queue_.empty() || closed_; });
    if (queue_.empty()) return std::nullopt;
    T v = std::move(queue_.front());
    queue_.pop_front();
    cv_space_.notify_one();
    return v;
  }

  void close() {
    std::lock_guard lock(mu_);
    closed_ = true;
    cv_data_.notify_all();
    cv_space_.notify_all();
  }

 private:
  std::mutex mu_;
  std::condition_variable cv_data_, cv_space_;
  std::deque<T> queue_;
  std::size_t capacity_;
  bool closed_ = false;
};

struct IngestStats {
  std::size_t emitted = 0;
  std::size_t rejected = 0;
};

/// Reads fragment records lazily and yields them ordered by last timestamp,
/// holding a bounded reorder window to tolerate file-order jitter. Records
/// staler than the window are rejected and counted.
class FragmentStream {
 public:
  FragmentStream(std::istream& in, double reorder_window)
      : in_(in), window_(reorder_window) {}

  std::optional<Fragment> next() {
    while (!eof_ && (heap_.empty() || max_seen_ - heap_.top().key < window_)) {
      std::string line;
      if (!std::getline(in_, line)) {
        eof_ = true;
        break;
      }
      ++line_no_;
      if (line.empty()) continue;
      Fragment f = fragment_from_json(json::parse(line), line_no_);
      validate_fragment(f);
      if (max_seen_ - f.last_t() > window_) {
        ++stats_.rejected;
        continue;
      }
      max_seen_ = std::max(max_seen_, f.last_t());
      heap_.push(Entry{f.last_t(), f.id, std::move(f)});
    }
    if (heap_.empty()) return std::nullopt;
    Fragment out = std::move(const_cast<Entry&>(heap_.top()).frag);
    heap_.pop();
    ++stats_.emitted;
    return out;
  }

  const IngestStats& stats() const { return stats_; }

 private:
  struct Entry {
    double key;
    std::string id;
    Fragment frag;
    bool operator>(const Entry& o) const {
      if (key != o.key) return key > o.key;
      return id > o.id;
    }
  };

  std::istream& in_;
  double window_;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> heap_;
  double max_seen_ = -std::numeric_limits<double>::infinity();
  bool eof_ = false;
  std::size_t line_no_ = 0;
  IngestStats stats_;
};

struct PipelineSummary {
  std::size_t fragments_in = 0;
  std::size_t rejected = 0;
  std::size_t worker_chains = 0;
  std::size_t master_merges = 0;
  std::size_t trajectories = 0;
  std::size_t unsolved = 0;
  double total_cost = 0.0;
  double wall_seconds = 0.0;
  std::vector<std::size_t> peak_resident;
};

namespace detail {

/// Chain cost under the given model: entry + exit + per-member inclusion +
/// link costs.
inline double chain_cost(const Chain& chain, const CostModelParams& params) {
  const NodeCosts nc = node_costs(params);
  double total = nc.enter + nc.exit + nc.include * static_cast<double>(chain.fragments.size());
  for (std::size_t i = 1; i < chain.fragments.size(); ++i) {
    const auto link = transition_cost(chain.fragments[i - 1], chain.fragments[i], params);
    total += link ? *link : params.max_transition_cost;
  }
  return total;
}

inline Fragment merge_chain(const Chain& chain, std::string id) {
  Fragment f;
  f.id = std::move(id);
  f.direction = chain.fragments.front().direction;
  std::vector<double> ls, ws;
  for (const Fragment& m : chain.fragments) {
    f.points.insert(f.points.end(), m.points.begin(), m.points.end());
    ls.push_back(m.length);
    ws.push_back(m.width);
  }
  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t k = v.size() / 2;
    return (v.size() % 2) ? v[k] : 0.5 * (v[k - 1] + v[k]);
  };
  f.length = median(ls);
  f.width = median(ws);
  return f;
}

struct WorkerMsg {
  int worker = 0;
  int direction = +1;
  double frontier = 0.0;  // no future chain from this worker ends earlier
  std::vector<Chain> chains;
  bool eos = false;
};

}  // namespace detail

/// Runs the staged pipeline:
///   1. fragments are routed by the x position of their last point to
///      spatial-partition workers running online association with eviction;
///   2. a master pass re-associates emitted chains whose extent touches a
///      partition boundary margin, treating each as a super-fragment;
///   3. a parallel pool rectifies the final chains.
/// Workers never share state; everything moves by message.
inline PipelineSummary run_pipeline(const PipelineConfig& cfg) {
  const auto t_start = std::chrono::steady_clock::now();
  const int n_workers = static_cast<int>(cfg.partitions.size()) - 1;
  if (n_workers < 1) throw std::runtime_error("pipeline: no partitions configured");

  std::ifstream in(cfg.input);
  if (!in) throw std::runtime_error("cannot open input " + cfg.input);

  PipelineSummary summary;
  summary.peak_resident.assign(n_workers, 0);

  std::mutex err_mu;
  std::exception_ptr first_error;
  std::atomic<bool> abort{false};
  const auto record_error = [&](std::exception_ptr e) {
    std::lock_guard lock(err_mu);
    if (!first_error) first_error = e;
    abort.store(true);
  };

  std::vector<std::unique_ptr<Channel<Fragment>>> to_worker;
  for (int w = 0; w < n_workers; ++w) to_worker.push_back(std::make_unique<Channel<Fragment>>());
  Channel<detail::WorkerMsg> to_master;
  Channel<Chain> to_rect;

  // ---- workers: per-direction online association with eviction ----
  std::vector<std::thread> workers;
  std::vector<std::size_t> worker_chain_counts(n_workers, 0);
  for (int w = 0; w < n_workers; ++w) {
    workers.emplace_back([&, w] {
      try {
        std::map<int, AssociationState> states;
        const auto state_of = [&](int dir) -> AssociationState& {
          auto it = states.find(dir);
          if (it == states.end())
            it = states.emplace(dir, AssociationState(cfg.cost, cfg.eviction_horizon)).first;
          return it->second;
        };
        const auto emit = [&](int dir, std::vector<Chain> chains, double frontier, bool eos) {
          std::sort(chains.begin(), chains.end(), [](const Chain& a, const Chain& b) {
            if (a.last_t() != b.last_t()) return a.last_t() < b.last_t();
            return a.fragments.front().id < b.fragments.front().id;
          });
          worker_chain_counts[w] += chains.size();
          to_master.send({w, dir, frontier, std::move(chains), eos});
        };
        std::size_t since_evict = 0;
        while (auto frag = to_worker[w]->receive()) {
          if (abort.load()) break;
          const int dir = frag->direction;
          auto& st = state_of(dir);
          st.add(std::move(*frag));
          if (++since_evict >= 64) {
            since_evict = 0;
            for (auto& [d, s] : states)
              emit(d, s.evict(), s.watermark() - s.horizon(), false);
          }
        }
        double frontier = std::numeric_limits<double>::infinity();
        for (auto& [d, s] : states) emit(d, s.flush(), frontier, false);
        std::size_t peak = 0;
        for (auto& [d, s] : states) peak = std::max(peak, s.peak_resident_fragments());
        summary.peak_resident[w] = peak;
        to_master.send({w, +1, frontier, {}, true});
      } catch (...) {
        record_error(std::current_exception());
        to_master.send({w, +1, std::numeric_limits<double>::infinity(), {}, true});
      }
    });
  }

  // ---- master: ordered merge, boundary re-association ----
  std::thread master([&] {
    try {
      struct Buffered {
        double key;
        std::string tiebreak;
        int seq;
        Chain chain;
        bool operator>(const Buffered& o) const {
          if (key != o.key) return key > o.key;
          if (tiebreak != o.tiebreak) return tiebreak > o.tiebreak;
          return seq > o.seq;
        }
      };
      std::priority_queue<Buffered, std::vector<Buffered>, std::greater<>> buffer;
      std::vector<double> frontier(n_workers, -std::numeric_limits<double>::infinity());
      std::vector<char> done(n_workers, 0);
      int seq = 0;

      std::map<int, AssociationState> master_states;
      std::map<std::string, Chain> super_members;
      int super_count = 0;
      const bool reassociate = n_workers > 1;

      const auto touches_boundary = [&](const Chain& c) {
        double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
        for (const auto& f : c.fragments)
          for (const auto& p : f.points) {
            xmin = std::min(xmin, p.x);
            xmax = std::max(xmax, p.x);
          }
        for (std::size_t b = 1; b + 1 < cfg.partitions.size(); ++b) {
          const double bd = cfg.partitions[b];
          if (bd >= xmin - cfg.boundary_margin && bd <= xmax + cfg.boundary_margin) return true;
        }
        return false;
      };

      const auto expand_master_chain = [&](const Chain& mc) {
        Chain full;
        for (const Fragment& super : mc.fragments) {
          const Chain& member = super_members.at(super.id);
          full.fragments.insert(full.fragments.end(), member.fragments.begin(),
                                member.fragments.end());
        }
        if (mc.fragments.size() > 1) ++summary.master_merges;
        return full;
      };

      const auto master_state_of = [&](int dir) -> AssociationState& {
        auto it = master_states.find(dir);
        if (it == master_states.end()) {
          CostModelParams mp = cfg.master_cost;
          mp.fp_prob = 1e-9;  // chains are already accepted; force inclusion
          it = master_states.emplace(dir, AssociationState(mp, cfg.eviction_horizon)).first;
        }
        return it->second;
      };

      const auto process_chain = [&](Chain&& chain, int dir) {
        if (!reassociate || !touches_boundary(chain)) {
          to_rect.send(std::move(chain));
          return;
        }
        auto& st = master_state_of(dir);
        const std::string super_id = "s" + std::to_string(super_count++);
        Fragment super = detail::merge_chain(chain, super_id);
        super_members.emplace(super_id, std::move(chain));
        st.add(std::move(super));
        for (auto& mc : st.evict()) to_rect.send(expand_master_chain(mc));
      };

      while (true) {
        auto msg = to_master.receive();
        if (!msg) break;
        if (msg->eos) {
          done[msg->worker] = 1;
          frontier[msg->worker] = std::numeric_limits<double>::infinity();
        } else {
          frontier[msg->worker] = std::max(frontier[msg->worker], msg->frontier);
          for (auto& c : msg->chains)
            buffer.push({c.last_t(), c.fragments.front().id, seq++, std::move(c)});
        }
        double lo = std::numeric_limits<double>::infinity();
        for (int w = 0; w < n_workers; ++w) lo = std::min(lo, frontier[w]);
        while (!buffer.empty() && buffer.top().key <= lo) {
          Chain c = std::move(const_cast<Buffered&>(buffer.top()).chain);
          buffer.pop();
          const int dir = c.fragments.front().direction;
          process_chain(std::move(c), dir);
        }
        bool all_done = true;
        for (int w = 0; w < n_workers; ++w) all_done = all_done && done[w];
        if (all_done && buffer.empty()) break;
      }
      for (auto& [dir, st] : master_states)
        for (auto& mc : st.flush()) to_rect.send(expand_master_chain(mc));
      to_rect.close();
    } catch (...) {
      record_error(std::current_exception());
      to_rect.close();
    }
  });

  // ---- rectification pool ----
  std::mutex out_mu;
  std::vector<Trajectory> results;
  std::vector<double> result_costs;
  const char* env_threads = std::getenv("TRAJRECON_THREADS");
  int pool_size = cfg.threads;
  if (env_threads != nullptr) pool_size = std::max(1, std::atoi(env_threads));
  pool_size = std::max(1, pool_size);
  std::vector<std::thread> pool;
  for (int i = 0; i < pool_size; ++i) {
    pool.emplace_back([&] {
      try {
        while (auto chain = to_rect.receive()) {
          if (abort.load()) break;
          Trajectory traj = rectify_trajectory(*chain, cfg.rect);
          const double cost = detail::chain_cost(*chain, cfg.cost);
          std::lock_guard lock(out_mu);
          results.push_back(std::move(traj));
          result_costs.push_back(cost);
        }
      } catch (...) {
        record_error(std::current_exception());
      }
    });
  }

  // ---- ingest + route (this thread) ----
  {
    FragmentStream stream(in, cfg.reorder_window);
    try {
      while (auto frag = stream.next()) {
        if (abort.load()) break;
        const double x_last = frag->points.back().x;
        int w = 0;
        while (w + 1 < n_workers && x_last >= cfg.partitions[w + 1]) ++w;
        to_worker[w]->send(std::move(*frag));
      }
    } catch (...) {
      record_error(std::current_exception());
    }
    summary.fragments_in = stream.stats().emitted;
    summary.rejected = stream.stats().rejected;
  }
  for (auto& ch : to_worker) ch->close();
  for (auto& t : workers) t.join();
  to_master.close();
  master.join();
  for (auto& t : pool) t.join();

  if (first_error) {
    json manifest;
    manifest["status"] = "aborted";
    manifest["fragments_in"] = summary.fragments_in;
    manifest["trajectories_completed"] = results.size();
    try {
      std::rethrow_exception(first_error);
    } catch (const std::exception& e) {
      manifest["error"] = e.what();
    } catch (...) {
      manifest["error"] = "unknown";
    }
    if (!cfg.output.empty()) {
      std::ofstream mf(cfg.output + ".manifest.json");
      mf << manifest.dump(2) << '\n';
    }
    std::rethrow_exception(first_error);
  }

  // deterministic ordering and ids
  std::vector<std::size_t> order(results.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (results[a].t.front() != results[b].t.front())
      return results[a].t.front() < results[b].t.front();
    return results[a].fragment_ids < results[b].fragment_ids;
  });
  std::vector<Trajectory> sorted;
  sorted.reserve(results.size());
  for (std::size_t k = 0; k < order.size(); ++k) {
    Trajectory t = std::move(results[order[k]]);
    t.id = "t" + std::to_string(1000000 + k).substr(1);
    summary.total_cost += result_costs[order[k]];
    if (!t.solved) ++summary.unsolved;
    sorted.push_back(std::move(t));
  }
  summary.trajectories = sorted.size();
  for (std::size_t c : worker_chain_counts) summary.worker_chains += c;
  if (!cfg.output.empty()) write_trajectories(cfg.output, sorted);

  summary.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return summary;
}

}  // namespace trajrecon
