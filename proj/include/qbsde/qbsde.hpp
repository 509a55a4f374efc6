#pragma once

#include "qbsde/error.hpp"
#include "qbsde/lattice.hpp"
#include "qbsde/constants.hpp"
#include "qbsde/conditions.hpp"
#include "qbsde/solver1d.hpp"
#include "qbsde/picard.hpp"
#include "qbsde/generators.hpp"
