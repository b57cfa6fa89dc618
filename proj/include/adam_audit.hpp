#pragma once

#include "adam_audit/audit.hpp"
#include "adam_audit/config.hpp"
#include "adam_audit/constants.hpp"
#include "adam_audit/errors.hpp"
#include "adam_audit/harness.hpp"
#include "adam_audit/io.hpp"
#include "adam_audit/linalg.hpp"
#include "adam_audit/noise.hpp"
#include "adam_audit/optimizer.hpp"
#include "adam_audit/parallel.hpp"
#include "adam_audit/probabilistic.hpp"
#include "adam_audit/problems.hpp"
#include "adam_audit/rng.hpp"
#include "adam_audit/sequence_lemmas.hpp"
#include "adam_audit/stats.hpp"
