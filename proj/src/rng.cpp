#include "carigen/rng.hpp"

#include <sstream>

namespace carigen {

std::string Rng::state() const {
  std::ostringstream os;
  os << engine_;
  return os.str();
}

void Rng::set_state(const std::string& s) {
  std::istringstream is(s);
  is >> engine_;
  if (is.fail()) throw std::runtime_error("Rng: malformed engine state string");
}

}  // namespace carigen
