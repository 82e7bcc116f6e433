#pragma once

// Everything in one include.

#include "genki/clients.hpp"
#include "genki/consistency.hpp"
#include "genki/corpus.hpp"
#include "genki/ensemble.hpp"
#include "genki/error.hpp"
#include "genki/generation.hpp"
#include "genki/lm.hpp"
#include "genki/metrics.hpp"
#include "genki/regime_fit.hpp"
#include "genki/retriever.hpp"
#include "genki/reward.hpp"
#include "genki/synthetic.hpp"
#include "genki/textstats.hpp"
#include "genki/tokenize.hpp"
