#pragma once

#include "jbe/catalog.hpp"
#include "jbe/diagnostics.hpp"
#include "jbe/errors.hpp"
#include "jbe/gaussian.hpp"
#include "jbe/inference.hpp"
#include "jbe/ingest.hpp"
#include "jbe/model.hpp"
#include "jbe/predict.hpp"
#include "jbe/simulate.hpp"
#include "jbe/stats.hpp"
