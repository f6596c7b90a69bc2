#include "marq/replay/agent_buffer.hpp"

#include <cmath>
#include <string>

#include "marq/errors.hpp"

namespace marq::replay {

AgentBuffer::AgentBuffer(int agent_id, std::size_t capacity, int num_actions,
                         double key_resolution)
    : agent_id_(agent_id),
      capacity_(capacity),
      key_resolution_(key_resolution),
      behavior_(num_actions) {
  if (capacity == 0) throw ParameterError("buffer capacity must be positive");
  if (!(key_resolution > 0.0)) throw ParameterError("key resolution must be positive");
}

StateKey AgentBuffer::key_of(std::span<const double> obs) const {
  return make_state_key(obs, key_resolution_);
}

AgentBuffer AgentBuffer::from_ring(int agent_id, std::size_t capacity, int num_actions,
                                   double key_resolution, std::vector<Transition> slots,
                                   std::size_t insert_cursor) {
  AgentBuffer b(agent_id, capacity, num_actions, key_resolution);
  if (slots.size() > capacity) throw LoadError("more slots than capacity");
  if (slots.size() < capacity ? insert_cursor != slots.size() % capacity
                              : insert_cursor >= capacity)
    throw LoadError("insert cursor inconsistent with ring size");
  for (const Transition& t : slots) {
    if (t.agent_id != agent_id) throw OwnershipError("slot owned by another agent");
    if (t.action < 0 || t.action >= num_actions) throw LoadError("slot action out of range");
    b.behavior_.add(b.key_of(t.obs), t.action);
  }
  b.ring_ = std::move(slots);
  b.cursor_ = insert_cursor;
  return b;
}

void AgentBuffer::push(Transition t) {
  if (t.agent_id != agent_id_)
    throw OwnershipError("transition of agent " + std::to_string(t.agent_id) +
                         " pushed to buffer of agent " + std::to_string(agent_id_));
  if (t.action < 0 || t.action >= behavior_.num_actions())
    throw ActionError("transition action out of range");
  if (!std::isfinite(t.reward)) throw NumericError("transition reward must be finite");

  behavior_.add(key_of(t.obs), t.action);
  if (ring_.size() < capacity_) {
    ring_.push_back(std::move(t));
    cursor_ = ring_.size() % capacity_;
    return;
  }
  Transition& victim = ring_[cursor_];
  behavior_.remove(key_of(victim.obs), victim.action);
  victim = std::move(t);
  cursor_ = (cursor_ + 1) % capacity_;
}

const Transition& AgentBuffer::at(std::size_t i) const {
  if (i >= ring_.size()) throw std::out_of_range("buffer index");
  const std::size_t oldest = ring_.size() < capacity_ ? 0 : cursor_;
  return ring_[(oldest + i) % ring_.size()];
}

std::vector<Transition> AgentBuffer::contents() const {
  std::vector<Transition> out;
  out.reserve(ring_.size());
  for (std::size_t i = 0; i < ring_.size(); ++i) out.push_back(at(i));
  return out;
}

std::vector<Transition> sample_batch(const AgentBuffer& buffer, std::size_t n,
                                     std::mt19937_64& rng) {
  if (buffer.empty()) throw EmptySourceError("cannot sample from an empty buffer");
  std::uniform_int_distribution<std::size_t> pick(0, buffer.size() - 1);
  std::vector<Transition> batch;
  batch.reserve(n);
  for (std::size_t i = 0; i < n; ++i) batch.push_back(buffer.slot(pick(rng)));
  return batch;
}

std::vector<Transition> sample_batch(const AgentBuffer& buffer, std::size_t n,
                                     std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return sample_batch(buffer, n, rng);
}

CrossBatch sample_cross(std::span<const AgentBuffer> buffers, int learner, int donor,
                        std::size_t n, std::mt19937_64& rng) {
  if (donor < 0 || static_cast<std::size_t>(donor) >= buffers.size() || learner < 0 ||
      static_cast<std::size_t>(learner) >= buffers.size())
    throw OwnershipError("learner or donor id out of range");
  const AgentBuffer& src = buffers[donor];
  if (src.empty()) throw EmptySourceError("donor buffer is empty");
  return CrossBatch{learner, donor, sample_batch(src, n, rng)};
}

void write_buffer(ByteWriter& out, const AgentBuffer& buffer) {
  out.u32(static_cast<std::uint32_t>(buffer.agent_id()));
  out.u64(buffer.capacity());
  out.u32(static_cast<std::uint32_t>(buffer.num_actions()));
  out.f64(buffer.key_resolution());
  out.u64(buffer.insert_cursor());
  out.u64(buffer.size());
  for (std::size_t i = 0; i < buffer.size(); ++i) {
    const Transition& t = buffer.slot(i);
    out.i32(t.agent_id);
    out.i32(t.action);
    out.f64(t.reward);
    out.i32(t.done ? 1 : 0);
    out.f64s(t.obs);
    out.f64s(t.next_obs);
  }
}

AgentBuffer read_buffer(ByteReader& in) {
  const auto agent = static_cast<int>(in.u32());
  const auto capacity = in.u64();
  const auto actions = static_cast<int>(in.u32());
  const double resolution = in.f64();
  const auto cursor = in.u64();
  const auto count = in.u64();
  if (count > capacity) throw LoadError("buffer dump holds more transitions than its capacity");
  std::vector<Transition> slots;
  slots.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    Transition t;
    t.agent_id = in.i32();
    t.action = in.i32();
    t.reward = in.f64();
    t.done = in.i32() != 0;
    t.obs = in.f64s();
    t.next_obs = in.f64s();
    slots.push_back(std::move(t));
  }
  return AgentBuffer::from_ring(agent, capacity, actions, resolution, std::move(slots), cursor);
}

std::vector<std::uint8_t> dump_buffer(const AgentBuffer& buffer) {
  ByteWriter out;
  write_buffer(out, buffer);
  return out.take();
}

AgentBuffer load_buffer(std::span<const std::uint8_t> bytes) {
  ByteReader in(bytes);
  AgentBuffer b = read_buffer(in);
  if (in.remaining() != 0) throw LoadError("trailing bytes after buffer dump");
  return b;
}

}  // namespace marq::replay
