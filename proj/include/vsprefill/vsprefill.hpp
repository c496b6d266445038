#pragma once

// One-stop include for the whole library.

#include "vsprefill/attention.hpp"
#include "vsprefill/bench.hpp"
#include "vsprefill/binio.hpp"
#include "vsprefill/config.hpp"
#include "vsprefill/datagen.hpp"
#include "vsprefill/indexer.hpp"
#include "vsprefill/matrix.hpp"
#include "vsprefill/merge.hpp"
#include "vsprefill/numerics.hpp"
#include "vsprefill/rng.hpp"
#include "vsprefill/rope.hpp"
#include "vsprefill/sparsity.hpp"
#include "vsprefill/tensor_io.hpp"
#include "vsprefill/theory.hpp"
#include "vsprefill/vsaggregate.hpp"
