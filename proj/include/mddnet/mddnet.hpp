#pragma once

#include "mddnet/core.hpp"
#include "mddnet/autograd.hpp"
#include "mddnet/params.hpp"
#include "mddnet/config.hpp"
#include "mddnet/data.hpp"
#include "mddnet/layers.hpp"
#include "mddnet/afem.hpp"
#include "mddnet/vfem.hpp"
#include "mddnet/fusion.hpp"
#include "mddnet/head.hpp"
#include "mddnet/model.hpp"
#include "mddnet/metrics.hpp"
#include "mddnet/checkpoint.hpp"
#include "mddnet/trainer.hpp"
#include "mddnet/viz.hpp"
