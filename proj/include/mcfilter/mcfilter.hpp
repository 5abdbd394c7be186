#ifndef MCFILTER_MCFILTER_HPP
#define MCFILTER_MCFILTER_HPP

#include "mcfilter/chem.hpp"
#include "mcfilter/demod.hpp"
#include "mcfilter/error.hpp"
#include "mcfilter/filter_spec.hpp"
#include "mcfilter/harness.hpp"
#include "mcfilter/oracle.hpp"
#include "mcfilter/rdme.hpp"
#include "mcfilter/rng.hpp"
#include "mcfilter/stats.hpp"

#endif
