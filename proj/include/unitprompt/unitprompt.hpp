#pragma once

// Umbrella header pulling in the whole library.

#include "checkpoint.hpp"
#include "cli.hpp"
#include "common.hpp"
#include "config.hpp"
#include "datafile.hpp"
#include "eval.hpp"
#include "forward.hpp"
#include "gradcheck.hpp"
#include "graph.hpp"
#include "infer.hpp"
#include "prompt.hpp"
#include "quantizer.hpp"
#include "rng.hpp"
#include "tasks.hpp"
#include "tensor.hpp"
#include "train.hpp"
#include "ulm.hpp"
#include "verbalizer.hpp"
