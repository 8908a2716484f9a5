#pragma once

// Everything: cluster model, batch scripts, scheduler, endpoint registry,
// load balancing, performance model, orchestrator, HTTP front, tribunal,
// and the benchmark driver.

#include "hpcserve/balancer.hpp"
#include "hpcserve/bench.hpp"
#include "hpcserve/cluster.hpp"
#include "hpcserve/errors.hpp"
#include "hpcserve/gateway.hpp"
#include "hpcserve/hosts.hpp"
#include "hpcserve/http_gateway.hpp"
#include "hpcserve/perf_model.hpp"
#include "hpcserve/scheduler.hpp"
#include "hpcserve/slurm_script.hpp"
#include "hpcserve/tribunal.hpp"
