// Umbrella header: phylogenies and score prediction for language models.
#pragma once

#include "lmphylo/errors.hpp"
#include "lmphylo/genome.hpp"
#include "lmphylo/phylo_core.hpp"
#include "lmphylo/population.hpp"
#include "lmphylo/predict.hpp"
#include "lmphylo/providers.hpp"
#include "lmphylo/run_config.hpp"
#include "lmphylo/scans.hpp"
#include "lmphylo/synthlab.hpp"
#include "lmphylo/tree.hpp"
