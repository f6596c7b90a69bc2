#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "marq/binary_io.hpp"
#include "marq/replay/empirical_behavior.hpp"
#include "marq/replay/transition.hpp"

namespace marq::replay {

inline constexpr double kDefaultKeyResolution = 1e-3;

/// Bounded FIFO dataset D_a for one agent. Behavior counts always describe
/// exactly the transitions currently stored.
class AgentBuffer {
 public:
  AgentBuffer(int agent_id, std::size_t capacity, int num_actions,
              double key_resolution = kDefaultKeyResolution);

  /// Rebuilds a buffer from raw ring slots (as stored, not age order).
  static AgentBuffer from_ring(int agent_id, std::size_t capacity, int num_actions,
                               double key_resolution, std::vector<Transition> slots,
                               std::size_t insert_cursor);

  void push(Transition t);

  int agent_id() const { return agent_id_; }
  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return ring_.size(); }
  bool empty() const { return ring_.empty(); }
  int num_actions() const { return behavior_.num_actions(); }
  double key_resolution() const { return key_resolution_; }

  /// i-th oldest stored transition.
  const Transition& at(std::size_t i) const;
  /// Slot index in the ring storage (ring order, not age order).
  const Transition& slot(std::size_t i) const { return ring_.at(i); }
  std::size_t insert_cursor() const { return cursor_; }

  StateKey key_of(std::span<const double> obs) const;
  const EmpiricalBehavior& behavior() const { return behavior_; }

  std::vector<Transition> contents() const;

 private:
  int agent_id_;
  std::size_t capacity_;
  double key_resolution_;
  std::vector<Transition> ring_;
  std::size_t cursor_ = 0;
  EmpiricalBehavior behavior_;
};

/// n transitions drawn uniformly with replacement; slots are drawn in order
/// from uniform_int_distribution over ring slots.
std::vector<Transition> sample_batch(const AgentBuffer& buffer, std::size_t n,
                                     std::mt19937_64& rng);
std::vector<Transition> sample_batch(const AgentBuffer& buffer, std::size_t n,
                                     std::uint64_t seed);

struct CrossBatch {
  int learner = 0;
  int donor = 0;
  std::vector<Transition> transitions;  // all owned by the donor
};

/// Batch from the donor's dataset tagged for the learner's update.
CrossBatch sample_cross(std::span<const AgentBuffer> buffers, int learner, int donor,
                        std::size_t n, std::mt19937_64& rng);

// Length-prefixed binary dump: u32 agent, u64 capacity, u32 num_actions,
// f64 key resolution, u64 insert cursor, u64 count, then per transition in ring
// slot order: i32 agent, i32 action, f64 reward, i32 done, f64 array obs,
// f64 array next_obs. Slot order is kept so sampling resumes identically.
void write_buffer(ByteWriter& out, const AgentBuffer& buffer);
AgentBuffer read_buffer(ByteReader& in);
std::vector<std::uint8_t> dump_buffer(const AgentBuffer& buffer);
AgentBuffer load_buffer(std::span<const std::uint8_t> bytes);

}  // namespace marq::replay
