#include "styleformer/rng.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace styleformer {

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream)
    : seed_(seed), stream_(stream), engine_(splitmix64(seed ^ splitmix64(stream))) {}

RngStream RngStream::derive(std::uint64_t index) const {
  return RngStream(seed_, splitmix64(stream_ ^ splitmix64(index + 0x632be59bd9b4e019ULL)));
}

double RngStream::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double RngStream::normal() {
  // 1 - u lies in (0, 1], so the log is finite.
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::size_t RngStream::index(std::size_t bound) {
  if (bound == 0) throw std::invalid_argument("RngStream::index: empty range");
  return static_cast<std::size_t>(uniform() * static_cast<double>(bound)) % bound;
}

std::string RngStream::serialize() const {
  std::ostringstream os;
  os << seed_ << ' ' << stream_ << ' ' << engine_;
  return os.str();
}

RngStream RngStream::deserialize(const std::string& text) {
  std::istringstream is(text);
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
  is >> seed >> stream;
  RngStream out(seed, stream);
  is >> out.engine_;
  if (!is) throw std::invalid_argument("malformed RngStream state");
  return out;
}

}  // namespace styleformer
