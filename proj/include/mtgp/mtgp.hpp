#pragma once

#include "mtgp/data/cube.hpp"
#include "mtgp/data/preprocess.hpp"
#include "mtgp/data/raster.hpp"
#include "mtgp/data/spectra.hpp"
#include "mtgp/data/split.hpp"
#include "mtgp/errors.hpp"
#include "mtgp/experiment.hpp"
#include "mtgp/fit.hpp"
#include "mtgp/kernels.hpp"
#include "mtgp/mapping.hpp"
#include "mtgp/model.hpp"
#include "mtgp/observations.hpp"
#include "mtgp/optimizer.hpp"
#include "mtgp/serialization.hpp"
#include "mtgp/synthetic.hpp"
#include "mtgp/task_corr.hpp"
