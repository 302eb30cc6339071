#include "trireid/rng.hpp"

#include <sstream>

#include "trireid/error.hpp"

namespace trireid {

std::string Rng::state() const {
  std::ostringstream os;
  os << gen_;
  return os.str();
}

void Rng::set_state(const std::string& s) {
  std::istringstream is(s);
  is >> gen_;
  if (is.fail()) throw ValueError("Rng::set_state: unparsable engine state");
}

}  // namespace trireid
