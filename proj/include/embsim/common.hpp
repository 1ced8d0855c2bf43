#pragma once

// Shared primitives: deterministic counter-based random draws, the element
// codec used for embedding rows, and small utilities.

#include <cmath>
#include <condition_variable>
#include <cstdint>
#include <cstring>
#include <deque>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace embsim {

using Byte = unsigned char;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix64(std::uint64_t a, std::uint64_t b) {
  return splitmix64(a ^ splitmix64(b));
}

// u64 -> [0, 1)
inline double to_unit_double(std::uint64_t u) {
  return static_cast<double>(u >> 11) * (1.0 / 9007199254740992.0);
}

struct ValueDistribution {
  enum class Kind { Uniform, Normal };
  Kind kind = Kind::Uniform;
  double a = 0.0;  // lo or mean
  double b = 1.0;  // hi or stddev
};

// Value of draw `index` under `seed`; pure function, so replay order and
// queueing cannot change results.
inline double draw_value(std::uint64_t seed, std::uint64_t index,
                         const ValueDistribution& dist) {
  std::uint64_t u = mix64(seed, index);
  if (dist.kind == ValueDistribution::Kind::Uniform) {
    return dist.a + (dist.b - dist.a) * to_unit_double(u);
  }
  // Box-Muller from two sub-draws of the same counter.
  double u1 = to_unit_double(mix64(u, 0x51ed270b9ULL));
  double u2 = to_unit_double(mix64(u, 0xa12fb3c47ULL));
  if (u1 < 1e-300) u1 = 1e-300;
  double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  return dist.a + dist.b * z;
}

// ---- element codec ----------------------------------------------------------
// p=4: IEEE float, p=8: IEEE double, p=2: bfloat16-style truncation.

inline void encode_element(double v, int precision_bytes, Byte* out) {
  switch (precision_bytes) {
    case 8: {
      std::memcpy(out, &v, 8);
      return;
    }
    case 4: {
      float f = static_cast<float>(v);
      std::memcpy(out, &f, 4);
      return;
    }
    case 2: {
      float f = static_cast<float>(v);
      std::uint32_t bits;
      std::memcpy(&bits, &f, 4);
      std::uint16_t h = static_cast<std::uint16_t>(bits >> 16);
      std::memcpy(out, &h, 2);
      return;
    }
    default:
      throw std::invalid_argument("unsupported element precision");
  }
}

inline double decode_element(const Byte* in, int precision_bytes) {
  switch (precision_bytes) {
    case 8: {
      double v;
      std::memcpy(&v, in, 8);
      return v;
    }
    case 4: {
      float f;
      std::memcpy(&f, in, 4);
      return f;
    }
    case 2: {
      std::uint16_t h;
      std::memcpy(&h, in, 2);
      std::uint32_t bits = static_cast<std::uint32_t>(h) << 16;
      float f;
      std::memcpy(&f, &bits, 4);
      return f;
    }
    default:
      throw std::invalid_argument("unsupported element precision");
  }
}

// Bounded queue of initialization draws filled by a background thread.
// Consumption order defines the draw index, so a given first-touch order of
// rows always yields the same values regardless of queue depth.
class ValueQueue {
 public:
  ValueQueue(std::uint64_t seed, ValueDistribution dist, std::size_t depth)
      : seed_(seed), dist_(dist), depth_(depth == 0 ? 1 : depth) {
    producer_ = std::thread([this] { produce(); });
  }

  ~ValueQueue() {
    {
      std::lock_guard<std::mutex> lk(mu_);
      stop_ = true;
    }
    cv_space_.notify_all();
    cv_data_.notify_all();
    producer_.join();
  }

  ValueQueue(const ValueQueue&) = delete;
  ValueQueue& operator=(const ValueQueue&) = delete;

  // Pops the next n draws in order.
  void take(std::size_t n, double* out) {
    std::unique_lock<std::mutex> lk(mu_);
    for (std::size_t i = 0; i < n; ++i) {
      cv_data_.wait(lk, [this] { return !queue_.empty(); });
      out[i] = queue_.front();
      queue_.pop_front();
      cv_space_.notify_one();
    }
  }

  std::uint64_t consumed() const {
    std::lock_guard<std::mutex> lk(mu_);
    return next_index_ - queue_.size();
  }

 private:
  void produce() {
    std::unique_lock<std::mutex> lk(mu_);
    while (!stop_) {
      cv_space_.wait(lk, [this] { return stop_ || queue_.size() < depth_; });
      while (!stop_ && queue_.size() < depth_) {
        queue_.push_back(draw_value(seed_, next_index_++, dist_));
        cv_data_.notify_one();
      }
    }
  }

  std::uint64_t seed_;
  ValueDistribution dist_;
  std::size_t depth_;
  mutable std::mutex mu_;
  std::condition_variable cv_data_;
  std::condition_variable cv_space_;
  std::deque<double> queue_;
  std::uint64_t next_index_ = 0;
  bool stop_ = false;
  std::thread producer_;
};

// FNV-1a over a byte string; used for manifest model hashes.
inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace embsim
