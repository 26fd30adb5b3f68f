#pragma once

#include "mgpc/basis.hpp"
#include "mgpc/cluster.hpp"
#include "mgpc/config.hpp"
#include "mgpc/csv.hpp"
#include "mgpc/dist.hpp"
#include "mgpc/error.hpp"
#include "mgpc/log.hpp"
#include "mgpc/models.hpp"
#include "mgpc/optim.hpp"
#include "mgpc/process.hpp"
#include "mgpc/quad.hpp"
#include "mgpc/random.hpp"
#include "mgpc/serialize.hpp"
#include "mgpc/surrogate.hpp"
