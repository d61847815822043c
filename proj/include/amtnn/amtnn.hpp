#ifndef AMTNN_AMTNN_HPP
#define AMTNN_AMTNN_HPP

// Umbrella header.

#include "amtnn/alpha.hpp"
#include "amtnn/autodiff.hpp"
#include "amtnn/bounds.hpp"
#include "amtnn/config.hpp"
#include "amtnn/data.hpp"
#include "amtnn/diagnostics.hpp"
#include "amtnn/errors.hpp"
#include "amtnn/gradcheck.hpp"
#include "amtnn/losses.hpp"
#include "amtnn/model.hpp"
#include "amtnn/report.hpp"
#include "amtnn/rng.hpp"
#include "amtnn/tensor.hpp"
#include "amtnn/trainer.hpp"
#include "amtnn/types.hpp"

#endif  // AMTNN_AMTNN_HPP
