#pragma once

#include "types.hpp"
#include "spsc_ring.hpp"
#include "mpsc_queue.hpp"
#include "ring_core.hpp"
#include "virtual_clock.hpp"
#include "sim_device.hpp"
#include "partition.hpp"
#include "corpus.hpp"
#include "metrics.hpp"
#include "executor.hpp"
#include "handle.hpp"
#include "platform.hpp"
#include "io_pool.hpp"
#include "architectures.hpp"
#include "native_backend.hpp"
