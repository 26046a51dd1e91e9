#pragma once

#include "picle/config.hpp"
#include "picle/corpus.hpp"
#include "picle/embedding.hpp"
#include "picle/errors.hpp"
#include "picle/http.hpp"
#include "picle/llm_gateway.hpp"
#include "picle/neighborhood.hpp"
#include "picle/perturb.hpp"
#include "picle/pipeline.hpp"
#include "picle/promptcraft.hpp"
#include "picle/rng.hpp"
#include "picle/sequence_eval.hpp"
