#ifndef CHURNSTACK_CHURNSTACK_HPP
#define CHURNSTACK_CHURNSTACK_HPP

#include "churnstack/common.hpp"
#include "churnstack/convnet.hpp"
#include "churnstack/gp.hpp"
#include "churnstack/gpboost.hpp"
#include "churnstack/imaging.hpp"
#include "churnstack/metrics.hpp"
#include "churnstack/stacker.hpp"
#include "churnstack/tabular.hpp"

#endif  // CHURNSTACK_CHURNSTACK_HPP
