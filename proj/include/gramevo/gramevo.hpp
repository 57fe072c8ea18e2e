#pragma once

// Umbrella header: grammar-driven neuroevolution toolkit.

#include "gramevo/dataset.hpp"
#include "gramevo/dense_net.hpp"
#include "gramevo/engine.hpp"
#include "gramevo/evaluator.hpp"
#include "gramevo/format.hpp"
#include "gramevo/genotype.hpp"
#include "gramevo/grammar.hpp"
#include "gramevo/operators.hpp"
#include "gramevo/phenotype.hpp"
#include "gramevo/rng.hpp"
