#include "omniloco/rng.hpp"

#include <sstream>

namespace omniloco {

std::string Rng::save_state() const {
  std::ostringstream os;
  os << seed_ << ' ' << eng_;
  return os.str();
}

void Rng::load_state(const std::string& text) {
  std::istringstream is(text);
  is >> seed_ >> eng_;
  OL_REQUIRE(!is.fail(), "Rng::load_state: malformed state string");
}

}  // namespace omniloco
