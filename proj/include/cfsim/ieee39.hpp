#pragma once

#include "cfsim/case_io.hpp"

namespace cfsim {

/// Built-in modified IEEE 39-bus case: standard topology and loads, with the
/// ten machine buses carrying converters instead (alternating GFM/GFL by
/// ascending bus number, lowest GFM). Default event: load outage at bus 8 at
/// t = 1 s. Dispatch and setpoints follow the standard case.
CaseScenario build_ieee39_ibr();

}  // namespace cfsim
