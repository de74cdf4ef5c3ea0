#pragma once

#include "lobfill/error.hpp"
#include "lobfill/text.hpp"
#include "lobfill/order_book.hpp"
#include "lobfill/message_io.hpp"
#include "lobfill/features.hpp"
#include "lobfill/lifecycle.hpp"
#include "lobfill/survival.hpp"
#include "lobfill/mlp.hpp"
#include "lobfill/fill_model.hpp"
#include "lobfill/cleanup_model.hpp"
#include "lobfill/placement.hpp"
#include "lobfill/backtest.hpp"
#include "lobfill/synth_flow.hpp"
#include "lobfill/record_io.hpp"
#include "lobfill/config.hpp"
