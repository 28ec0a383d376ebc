#ifndef SEMPAR_SEMPAR_HPP
#define SEMPAR_SEMPAR_HPP

#include "sempar/anchoring.hpp"
#include "sempar/arborescence.hpp"
#include "sempar/dataset.hpp"
#include "sempar/grammar.hpp"
#include "sempar/graph.hpp"
#include "sempar/losses.hpp"
#include "sempar/oracle.hpp"
#include "sempar/solver.hpp"
#include "sempar/synthetic.hpp"

#endif  // SEMPAR_SEMPAR_HPP
