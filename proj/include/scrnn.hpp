#pragma once

// Umbrella header.
#include "scrnn/base64.hpp"
#include "scrnn/checkpoint.hpp"
#include "scrnn/config.hpp"
#include "scrnn/decode.hpp"
#include "scrnn/experiments.hpp"
#include "scrnn/grad_check.hpp"
#include "scrnn/grad_suite.hpp"
#include "scrnn/graph.hpp"
#include "scrnn/labelseq.hpp"
#include "scrnn/lstm.hpp"
#include "scrnn/metrics.hpp"
#include "scrnn/nn.hpp"
#include "scrnn/pipeline.hpp"
#include "scrnn/seqmodel.hpp"
#include "scrnn/synthdata.hpp"
#include "scrnn/tensor.hpp"
#include "scrnn/training_data.hpp"
#include "scrnn/unary.hpp"
